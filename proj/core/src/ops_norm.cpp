#include <cmath>

#include "cfstereo/ops.hpp"
#include "op_common.hpp"

namespace cfstereo {

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool train, T momentum, T eps) {
    detail::check(x.rank() >= 2, "batchnorm: need [N,C,...], got " + shape_str(x.shape()));
    const int64_t N = x.dim(0), C = x.dim(1);
    const int64_t SP = x.size() / (N * C);
    const Tensor<T>* per_channel[] = {&gamma, &beta, &running_mean, &running_var};
    for (const Tensor<T>* t : per_channel)
        detail::check(t->rank() == 1 && t->dim(0) == C,
                      "batchnorm: per-channel tensors must be [" + std::to_string(C) + "], got " +
                          shape_str(t->shape()));
    const int64_t m = N * SP;  // elements per channel

    std::vector<T> mean(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
    if (train) {
        detail::check(m > 1, "batchnorm: train mode needs more than one value per channel, got " +
                                 shape_str(x.shape()));
        const T* xv = x.values().data();
        std::vector<T> var(static_cast<size_t>(C));
        for (int64_t c = 0; c < C; ++c) {
            T acc = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* src = xv + (n * C + c) * SP;
                for (int64_t i = 0; i < SP; ++i) acc += src[i];
            }
            const T mu = acc / static_cast<T>(m);
            T vacc = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* src = xv + (n * C + c) * SP;
                for (int64_t i = 0; i < SP; ++i) {
                    const T d = src[i] - mu;
                    vacc += d * d;
                }
            }
            mean[c] = mu;
            var[c] = vacc / static_cast<T>(m);
            invstd[c] = T(1) / std::sqrt(var[c] + eps);
        }
        // Fold batch statistics into the running buffers; variance is stored
        // with the unbiased correction so eval mode matches expectations.
        auto& rm = running_mean.mutable_values();
        auto& rv = running_var.mutable_values();
        const T unbias = static_cast<T>(m) / static_cast<T>(m - 1);
        for (int64_t c = 0; c < C; ++c) {
            rm[c] = (T(1) - momentum) * rm[c] + momentum * mean[c];
            rv[c] = (T(1) - momentum) * rv[c] + momentum * var[c] * unbias;
        }
    } else {
        const auto& rm = running_mean.values();
        const auto& rv = running_var.values();
        for (int64_t c = 0; c < C; ++c) {
            mean[c] = rm[c];
            invstd[c] = T(1) / std::sqrt(rv[c] + eps);
        }
    }

    std::vector<T> y(x.values().size());
    {
        const T* xv = x.values().data();
        const T* g = gamma.values().data();
        const T* b = beta.values().data();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const T* src = xv + (n * C + c) * SP;
                T* dst = y.data() + (n * C + c) * SP;
                const T gc = g[c] * invstd[c], mc = mean[c], bc = b[c];
                for (int64_t i = 0; i < SP; ++i) dst[i] = gc * (src[i] - mc) + bc;
            }
    }

    return make_op_output<T>(
        "batchnorm", x.shape(), std::move(y), {x, gamma, beta},
        [x, gamma, beta, mean, invstd, train, N, C, SP, m](const TensorData<T>& out) {
            const T* dy = out.grad.data();
            const T* xv = x.values().data();
            const T* g = gamma.values().data();
            // Channel reductions shared by every branch.
            std::vector<T> sum_dy(static_cast<size_t>(C), T(0));
            std::vector<T> sum_dy_xhat(static_cast<size_t>(C), T(0));
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T* gsrc = dy + (n * C + c) * SP;
                    const T* src = xv + (n * C + c) * SP;
                    T a = T(0), b2 = T(0);
                    for (int64_t i = 0; i < SP; ++i) {
                        a += gsrc[i];
                        b2 += gsrc[i] * (src[i] - mean[c]) * invstd[c];
                    }
                    sum_dy[c] += a;
                    sum_dy_xhat[c] += b2;
                }
            if (beta.requires_grad()) {
                auto& db = beta.data()->grad_buffer();
                for (int64_t c = 0; c < C; ++c) db[c] += sum_dy[c];
            }
            if (gamma.requires_grad()) {
                auto& dg = gamma.data()->grad_buffer();
                for (int64_t c = 0; c < C; ++c) dg[c] += sum_dy_xhat[c];
            }
            if (x.requires_grad()) {
                auto& dx = x.data()->grad_buffer();
                if (train) {
                    // dx = g*invstd * (dy - mean(dy) - xhat * mean(dy*xhat))
                    for (int64_t n = 0; n < N; ++n)
                        for (int64_t c = 0; c < C; ++c) {
                            const T* gsrc = dy + (n * C + c) * SP;
                            const T* src = xv + (n * C + c) * SP;
                            T* dst = dx.data() + (n * C + c) * SP;
                            const T k = g[c] * invstd[c];
                            const T mdy = sum_dy[c] / static_cast<T>(m);
                            const T mdyx = sum_dy_xhat[c] / static_cast<T>(m);
                            for (int64_t i = 0; i < SP; ++i) {
                                const T xhat = (src[i] - mean[c]) * invstd[c];
                                dst[i] += k * (gsrc[i] - mdy - xhat * mdyx);
                            }
                        }
                } else {
                    // Running statistics are constants here, so the map is a
                    // plain per-channel affine one.
                    for (int64_t n = 0; n < N; ++n)
                        for (int64_t c = 0; c < C; ++c) {
                            const T* gsrc = dy + (n * C + c) * SP;
                            T* dst = dx.data() + (n * C + c) * SP;
                            const T k = g[c] * invstd[c];
                            for (int64_t i = 0; i < SP; ++i) dst[i] += k * gsrc[i];
                        }
                }
            }
        });
}

#define CFS_INSTANTIATE(T)                                                                    \
    template Tensor<T> batchnorm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                    Tensor<T>&, Tensor<T>&, bool, T, T);

CFS_INSTANTIATE(float)
CFS_INSTANTIATE(double)
#undef CFS_INSTANTIATE

}  // namespace cfstereo
