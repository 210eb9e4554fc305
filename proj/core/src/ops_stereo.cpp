#include <cmath>

#include "cfstereo/ops.hpp"
#include "op_common.hpp"

namespace cfstereo {

template <typename T>
Tensor<T> build_cost_volume(const Tensor<T>& left, const Tensor<T>& right, int64_t d_levels) {
    detail::check_rank("build_cost_volume left", left, 4);
    detail::check_same_shape("build_cost_volume", left, right);
    detail::check(d_levels >= 1, "build_cost_volume: d_levels must be >= 1, got " + std::to_string(d_levels));
    const int64_t N = left.dim(0), C = left.dim(1), H = left.dim(2), W = left.dim(3);
    detail::check(d_levels <= W, "build_cost_volume: d_levels " + std::to_string(d_levels) +
                                     " exceeds feature width " + std::to_string(W));

    std::vector<T> y(static_cast<size_t>(N * 2 * C * d_levels * H * W), T(0));
    const T* lv = left.values().data();
    const T* rv = right.values().data();
    // slice d: left features as-is, right features shifted d columns right
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t d = 0; d < d_levels; ++d)
                for (int64_t h = 0; h < H; ++h) {
                    const T* lrow = lv + ((n * C + c) * H + h) * W;
                    const T* rrow = rv + ((n * C + c) * H + h) * W;
                    T* ldst = y.data() + ((((n * 2 * C + c) * d_levels) + d) * H + h) * W;
                    T* rdst = y.data() + ((((n * 2 * C + C + c) * d_levels) + d) * H + h) * W;
                    for (int64_t x = 0; x < W; ++x) {
                        ldst[x] = lrow[x];
                        if (x >= d) rdst[x] = rrow[x - d];
                    }
                }

    return make_op_output<T>(
        "build_cost_volume", Shape{N, 2 * C, d_levels, H, W}, std::move(y), {left, right},
        [left, right, N, C, H, W, d_levels](const TensorData<T>& out) {
            const T* dy = out.grad.data();
            if (left.requires_grad()) {
                auto& dl = left.data()->grad_buffer();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t d = 0; d < d_levels; ++d)
                            for (int64_t h = 0; h < H; ++h) {
                                const T* src = dy + ((((n * 2 * C + c) * d_levels) + d) * H + h) * W;
                                T* dst = dl.data() + ((n * C + c) * H + h) * W;
                                for (int64_t x = 0; x < W; ++x) dst[x] += src[x];
                            }
            }
            if (right.requires_grad()) {
                auto& dr = right.data()->grad_buffer();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t d = 0; d < d_levels; ++d)
                            for (int64_t h = 0; h < H; ++h) {
                                const T* src = dy + ((((n * 2 * C + C + c) * d_levels) + d) * H + h) * W;
                                T* dst = dr.data() + ((n * C + c) * H + h) * W;
                                for (int64_t x = d; x < W; ++x) dst[x - d] += src[x];
                            }
            }
        });
}

template <typename T>
Tensor<T> soft_argmin(const Tensor<T>& costs) {
    detail::check_rank("soft_argmin", costs, 5);
    detail::check(costs.dim(1) == 1, "soft_argmin: expected a single cost channel, got " +
                                         shape_str(costs.shape()));
    const int64_t N = costs.dim(0), D = costs.dim(2), H = costs.dim(3), W = costs.dim(4);
    const int64_t SP = H * W;

    std::vector<T> y(static_cast<size_t>(N * SP));
    const T* cv = costs.values().data();
    std::vector<T> p(static_cast<size_t>(D));
    for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < SP; ++i) {
            const T* col = cv + n * D * SP + i;
            // softmax over -cost, then expectation of the level index
            T mx = -col[0];
            for (int64_t d = 1; d < D; ++d) mx = std::max(mx, -col[d * SP]);
            T denom = T(0);
            for (int64_t d = 0; d < D; ++d) {
                p[d] = std::exp(-col[d * SP] - mx);
                denom += p[d];
            }
            T e = T(0);
            for (int64_t d = 0; d < D; ++d) e += static_cast<T>(d) * p[d] / denom;
            y[n * SP + i] = e;
        }

    return make_op_output<T>(
        "soft_argmin", Shape{N, H, W}, std::move(y), {costs},
        [costs, N, D, SP](const TensorData<T>& out) {
            if (!costs.requires_grad()) return;
            auto& dc = costs.data()->grad_buffer();
            const T* cv = costs.values().data();
            const T* dy = out.grad.data();
            const T* ev = out.values.data();
            std::vector<T> p(static_cast<size_t>(D));
            for (int64_t n = 0; n < N; ++n)
                for (int64_t i = 0; i < SP; ++i) {
                    const T* col = cv + n * D * SP + i;
                    T mx = -col[0];
                    for (int64_t d = 1; d < D; ++d) mx = std::max(mx, -col[d * SP]);
                    T denom = T(0);
                    for (int64_t d = 0; d < D; ++d) {
                        p[d] = std::exp(-col[d * SP] - mx);
                        denom += p[d];
                    }
                    const T e = ev[n * SP + i];
                    const T g = dy[n * SP + i];
                    T* dcol = dc.data() + n * D * SP + i;
                    // d(e)/d(cost_d) = p_d * (e - d)
                    for (int64_t d = 0; d < D; ++d)
                        dcol[d * SP] += g * (p[d] / denom) * (e - static_cast<T>(d));
                }
        });
}

template <typename T>
Tensor<T> masked_smooth_l1_loss(const Tensor<T>& pred, const std::vector<T>& gt,
                                const std::vector<uint8_t>& mask) {
    detail::check(static_cast<size_t>(pred.size()) == gt.size() && gt.size() == mask.size(),
                  "masked_smooth_l1_loss: pred/gt/mask length mismatch " +
                      std::to_string(pred.size()) + "/" + std::to_string(gt.size()) + "/" +
                      std::to_string(mask.size()));
    int64_t valid = 0;
    for (uint8_t v : mask) valid += v ? 1 : 0;
    detail::check(valid > 0, "masked_smooth_l1_loss: mask selects no pixels");

    const T* pv = pred.values().data();
    T acc = T(0);
    for (size_t i = 0; i < gt.size(); ++i) {
        if (!mask[i]) continue;
        const T r = gt[i] - pv[i];
        const T a = std::abs(r);
        acc += a < T(1) ? T(0.5) * r * r : a - T(0.5);
    }
    const T inv_n = T(1) / static_cast<T>(valid);

    return make_op_output<T>(
        "masked_smooth_l1_loss", Shape{}, {acc * inv_n}, {pred},
        [pred, gt, mask, inv_n](const TensorData<T>& out) {
            if (!pred.requires_grad()) return;
            auto& dp = pred.data()->grad_buffer();
            const T* pv = pred.values().data();
            const T g = out.grad[0] * inv_n;
            for (size_t i = 0; i < gt.size(); ++i) {
                if (!mask[i]) continue;
                const T r = gt[i] - pv[i];
                // d/d(pred) of smooth_l1(gt - pred)
                const T f = std::abs(r) < T(1) ? r : (r > T(0) ? T(1) : T(-1));
                dp[i] += -g * f;
            }
        });
}

#define CFS_INSTANTIATE(T)                                                                     \
    template Tensor<T> build_cost_volume<T>(const Tensor<T>&, const Tensor<T>&, int64_t);      \
    template Tensor<T> soft_argmin<T>(const Tensor<T>&);                                       \
    template Tensor<T> masked_smooth_l1_loss<T>(const Tensor<T>&, const std::vector<T>&,       \
                                                const std::vector<uint8_t>&);

CFS_INSTANTIATE(float)
CFS_INSTANTIATE(double)
#undef CFS_INSTANTIATE

}  // namespace cfstereo
