#include "cfstereo/ops.hpp"
#include "gemm.hpp"
#include "op_common.hpp"

namespace cfstereo {

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const std::type_identity_t<std::optional<Tensor<T>>>& bias,
                 int stride, int padding) {
    detail::check_rank("conv3d input", input, 5);
    detail::check_rank("conv3d weight", weight, 5);
    detail::check(stride >= 1 && padding >= 0,
                  "conv3d: bad stride/padding " + std::to_string(stride) + "/" + std::to_string(padding));
    const int64_t N = input.dim(0), Cin = input.dim(1), D = input.dim(2), H = input.dim(3), W = input.dim(4);
    const int64_t Cout = weight.dim(0), kD = weight.dim(2), kH = weight.dim(3), kW = weight.dim(4);
    detail::check(weight.dim(1) == Cin, "conv3d: weight expects " + std::to_string(weight.dim(1)) +
                                            " input channels, input has " + std::to_string(Cin));
    if (bias) {
        detail::check_rank("conv3d bias", *bias, 1);
        detail::check(bias->dim(0) == Cout, "conv3d: bias length " + std::to_string(bias->dim(0)) +
                                                " vs " + std::to_string(Cout) + " output channels");
    }
    const int64_t OD = detail::conv_out_extent(D, kD, stride, padding, 1);
    const int64_t OH = detail::conv_out_extent(H, kH, stride, padding, 1);
    const int64_t OW = detail::conv_out_extent(W, kW, stride, padding, 1);
    detail::check(OD >= 1 && OH >= 1 && OW >= 1,
                  "conv3d: output would be empty for input " + shape_str(input.shape()) +
                      " with kernel " + shape_str(weight.shape()) + " stride " + std::to_string(stride));

    const int64_t K = Cin * kD * kH * kW;
    const int64_t cols = OD * OH * OW;
    std::vector<T> col(static_cast<size_t>(K * cols));
    std::vector<T> y(static_cast<size_t>(N * Cout * cols), T(0));
    const T* xv = input.values().data();
    const T* wv = weight.values().data();
    for (int64_t n = 0; n < N; ++n) {
        detail::vol2col3d(xv + n * Cin * D * H * W, Cin, D, H, W, kD, kH, kW, stride, padding, OD,
                          OH, OW, col.data());
        detail::gemm_accum(Cout, K, cols, wv, col.data(), y.data() + n * Cout * cols);
    }
    if (bias) {
        const T* bv = bias->values().data();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < Cout; ++c) {
                T* dst = y.data() + (n * Cout + c) * cols;
                for (int64_t i = 0; i < cols; ++i) dst[i] += bv[c];
            }
    }

    std::vector<Tensor<T>> node_inputs = {input, weight};
    if (bias) node_inputs.push_back(*bias);
    const int s = stride, p = padding;
    return make_op_output<T>(
        "conv3d", Shape{N, Cout, OD, OH, OW}, std::move(y), std::move(node_inputs),
        [input, weight, bias, s, p, N, Cin, D, H, W, Cout, kD, kH, kW, OD, OH, OW, K,
         cols](const TensorData<T>& out) {
            const T* dy = out.grad.data();
            if (bias && bias->requires_grad()) {
                auto& db = bias->data()->grad_buffer();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < Cout; ++c) {
                        const T* src = dy + (n * Cout + c) * cols;
                        T acc = T(0);
                        for (int64_t i = 0; i < cols; ++i) acc += src[i];
                        db[c] += acc;
                    }
            }
            const bool need_dw = weight.requires_grad();
            const bool need_dx = input.requires_grad();
            if (!need_dw && !need_dx) return;
            std::vector<T> col(static_cast<size_t>(K * cols));
            const T* xv = input.values().data();
            const T* wv = weight.values().data();
            for (int64_t n = 0; n < N; ++n) {
                const T* dyn = dy + n * Cout * cols;
                if (need_dw) {
                    detail::vol2col3d(xv + n * Cin * D * H * W, Cin, D, H, W, kD, kH, kW, s, p, OD,
                                      OH, OW, col.data());
                    detail::gemm_abT_accum(Cout, cols, K, dyn, col.data(),
                                           weight.data()->grad_buffer().data());
                }
                if (need_dx) {
                    std::fill(col.begin(), col.end(), T(0));
                    detail::gemm_aTb_accum(Cout, K, cols, wv, dyn, col.data());
                    detail::col2vol3d(col.data(), Cin, D, H, W, kD, kH, kW, s, p, OD, OH, OW,
                                      input.data()->grad_buffer().data() + n * Cin * D * H * W);
                }
            }
        });
}

template <typename T>
Tensor<T> deconv3d(const Tensor<T>& input, const Tensor<T>& weight, const std::type_identity_t<std::optional<Tensor<T>>>& bias,
                   int stride, int padding) {
    detail::check_rank("deconv3d input", input, 5);
    detail::check_rank("deconv3d weight", weight, 5);
    detail::check(stride >= 1 && padding >= 0,
                  "deconv3d: bad stride/padding " + std::to_string(stride) + "/" + std::to_string(padding));
    const int64_t N = input.dim(0), Cin = input.dim(1), D = input.dim(2), H = input.dim(3), W = input.dim(4);
    const int64_t Cout = weight.dim(1), kD = weight.dim(2), kH = weight.dim(3), kW = weight.dim(4);
    detail::check(weight.dim(0) == Cin, "deconv3d: weight expects " + std::to_string(weight.dim(0)) +
                                            " input channels, input has " + std::to_string(Cin));
    if (bias) {
        detail::check_rank("deconv3d bias", *bias, 1);
        detail::check(bias->dim(0) == Cout, "deconv3d: bias length " + std::to_string(bias->dim(0)) +
                                                " vs " + std::to_string(Cout) + " output channels");
    }
    const int64_t OD = (D - 1) * stride - 2 * padding + kD;
    const int64_t OH = (H - 1) * stride - 2 * padding + kH;
    const int64_t OW = (W - 1) * stride - 2 * padding + kW;
    detail::check(OD >= 1 && OH >= 1 && OW >= 1,
                  "deconv3d: output would be empty for input " + shape_str(input.shape()) +
                      " with kernel " + shape_str(weight.shape()));

    // Viewed from the output side this is the adjoint of a conv3d whose input
    // extents are (OD,OH,OW) and whose output extents are (D,H,W); all the
    // col geometry below is that conv's.
    const int64_t K = Cout * kD * kH * kW;
    const int64_t cols = D * H * W;
    std::vector<T> col(static_cast<size_t>(K * cols));
    std::vector<T> y(static_cast<size_t>(N * Cout * OD * OH * OW), T(0));
    const T* xv = input.values().data();
    const T* wv = weight.values().data();
    for (int64_t n = 0; n < N; ++n) {
        std::fill(col.begin(), col.end(), T(0));
        detail::gemm_aTb_accum(Cin, K, cols, wv, xv + n * Cin * cols, col.data());
        detail::col2vol3d(col.data(), Cout, OD, OH, OW, kD, kH, kW, stride, padding, D, H, W,
                          y.data() + n * Cout * OD * OH * OW);
    }
    if (bias) {
        const T* bv = bias->values().data();
        const int64_t sp = OD * OH * OW;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < Cout; ++c) {
                T* dst = y.data() + (n * Cout + c) * sp;
                for (int64_t i = 0; i < sp; ++i) dst[i] += bv[c];
            }
    }

    std::vector<Tensor<T>> node_inputs = {input, weight};
    if (bias) node_inputs.push_back(*bias);
    const int s = stride, p = padding;
    return make_op_output<T>(
        "deconv3d", Shape{N, Cout, OD, OH, OW}, std::move(y), std::move(node_inputs),
        [input, weight, bias, s, p, N, Cin, D, H, W, Cout, kD, kH, kW, OD, OH, OW, K,
         cols](const TensorData<T>& out) {
            const T* dy = out.grad.data();
            const int64_t sp = OD * OH * OW;
            if (bias && bias->requires_grad()) {
                auto& db = bias->data()->grad_buffer();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < Cout; ++c) {
                        const T* src = dy + (n * Cout + c) * sp;
                        T acc = T(0);
                        for (int64_t i = 0; i < sp; ++i) acc += src[i];
                        db[c] += acc;
                    }
            }
            const bool need_dw = weight.requires_grad();
            const bool need_dx = input.requires_grad();
            if (!need_dw && !need_dx) return;
            // dL/dx is a plain conv3d of dy with the same weight; dL/dW pairs
            // x rows against the unfolded dy.
            std::vector<T> col(static_cast<size_t>(K * cols));
            const T* xv = input.values().data();
            const T* wv = weight.values().data();
            for (int64_t n = 0; n < N; ++n) {
                detail::vol2col3d(dy + n * Cout * sp, Cout, OD, OH, OW, kD, kH, kW, s, p, D, H, W,
                                  col.data());
                if (need_dx)
                    detail::gemm_accum(Cin, K, cols, wv, col.data(),
                                       input.data()->grad_buffer().data() + n * Cin * cols);
                if (need_dw)
                    detail::gemm_abT_accum(Cin, cols, K, xv + n * Cin * cols, col.data(),
                                           weight.data()->grad_buffer().data());
            }
        });
}

#define CFS_INSTANTIATE(T)                                                                          \
    template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const std::type_identity_t<std::optional<Tensor<T>>>&, \
                                 int, int);                                                         \
    template Tensor<T> deconv3d<T>(const Tensor<T>&, const Tensor<T>&,                              \
                                   const std::type_identity_t<std::optional<Tensor<T>>>&, int, int);

CFS_INSTANTIATE(float)
CFS_INSTANTIATE(double)
#undef CFS_INSTANTIATE

}  // namespace cfstereo
