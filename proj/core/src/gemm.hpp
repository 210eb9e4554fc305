#pragma once

#include <cstdint>

namespace cfstereo {
namespace detail {

// All matrices are dense row-major. The m-k-n loop order keeps the inner
// loop a contiguous axpy, which the compiler vectorizes; that is what makes
// the conv layers fast enough without a BLAS dependency.

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_accum(int64_t M, int64_t K, int64_t N, const T* A, const T* B, T* C) {
    for (int64_t m = 0; m < M; ++m) {
        const T* a = A + m * K;
        T* c = C + m * N;
        for (int64_t k = 0; k < K; ++k) {
            const T av = a[k];
            const T* b = B + k * N;
            for (int64_t n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

// C[K,N] += A^T * B where A is [M,K], B is [M,N]
template <typename T>
void gemm_aTb_accum(int64_t M, int64_t K, int64_t N, const T* A, const T* B, T* C) {
    for (int64_t m = 0; m < M; ++m) {
        const T* a = A + m * K;
        const T* b = B + m * N;
        for (int64_t k = 0; k < K; ++k) {
            const T av = a[k];
            T* c = C + k * N;
            for (int64_t n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

// C[M,K] += A * B^T where A is [M,N], B is [K,N] (row dot products)
template <typename T>
void gemm_abT_accum(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
    for (int64_t m = 0; m < M; ++m) {
        const T* a = A + m * N;
        for (int64_t k = 0; k < K; ++k) {
            const T* b = B + k * N;
            T acc = T(0);
            for (int64_t n = 0; n < N; ++n) acc += a[n] * b[n];
            C[m * K + k] += acc;
        }
    }
}

inline int64_t conv_out_extent(int64_t x, int64_t k, int64_t stride, int64_t pad, int64_t dil) {
    return (x + 2 * pad - dil * (k - 1) - 1) / stride + 1;
}

// x [C,H,W] -> col [C*kH*kW, OH*OW]
template <typename T>
void im2col2d(const T* x, int64_t C, int64_t H, int64_t W, int64_t kH, int64_t kW,
              int64_t stride, int64_t pad, int64_t dil, int64_t OH, int64_t OW, T* col) {
    int64_t idx = 0;
    for (int64_t c = 0; c < C; ++c) {
        const T* xc = x + c * H * W;
        for (int64_t kh = 0; kh < kH; ++kh)
            for (int64_t kw = 0; kw < kW; ++kw)
                for (int64_t oh = 0; oh < OH; ++oh) {
                    const int64_t ih = oh * stride - pad + kh * dil;
                    if (ih < 0 || ih >= H) {
                        for (int64_t ow = 0; ow < OW; ++ow) col[idx++] = T(0);
                        continue;
                    }
                    const T* row = xc + ih * W;
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const int64_t iw = ow * stride - pad + kw * dil;
                        col[idx++] = (iw >= 0 && iw < W) ? row[iw] : T(0);
                    }
                }
    }
}

// Scatter-add inverse of im2col2d: col [C*kH*kW, OH*OW] -> x [C,H,W] (+=)
template <typename T>
void col2im2d(const T* col, int64_t C, int64_t H, int64_t W, int64_t kH, int64_t kW,
              int64_t stride, int64_t pad, int64_t dil, int64_t OH, int64_t OW, T* x) {
    int64_t idx = 0;
    for (int64_t c = 0; c < C; ++c) {
        T* xc = x + c * H * W;
        for (int64_t kh = 0; kh < kH; ++kh)
            for (int64_t kw = 0; kw < kW; ++kw)
                for (int64_t oh = 0; oh < OH; ++oh) {
                    const int64_t ih = oh * stride - pad + kh * dil;
                    if (ih < 0 || ih >= H) {
                        idx += OW;
                        continue;
                    }
                    T* row = xc + ih * W;
                    for (int64_t ow = 0; ow < OW; ++ow, ++idx) {
                        const int64_t iw = ow * stride - pad + kw * dil;
                        if (iw >= 0 && iw < W) row[iw] += col[idx];
                    }
                }
    }
}

// x [C,D,H,W] -> col [C*kD*kH*kW, OD*OH*OW]
template <typename T>
void vol2col3d(const T* x, int64_t C, int64_t D, int64_t H, int64_t W, int64_t kD, int64_t kH,
               int64_t kW, int64_t stride, int64_t pad, int64_t OD, int64_t OH, int64_t OW, T* col) {
    int64_t idx = 0;
    for (int64_t c = 0; c < C; ++c) {
        const T* xc = x + c * D * H * W;
        for (int64_t kd = 0; kd < kD; ++kd)
            for (int64_t kh = 0; kh < kH; ++kh)
                for (int64_t kw = 0; kw < kW; ++kw)
                    for (int64_t od = 0; od < OD; ++od) {
                        const int64_t id = od * stride - pad + kd;
                        if (id < 0 || id >= D) {
                            for (int64_t i = 0; i < OH * OW; ++i) col[idx++] = T(0);
                            continue;
                        }
                        const T* plane = xc + id * H * W;
                        for (int64_t oh = 0; oh < OH; ++oh) {
                            const int64_t ih = oh * stride - pad + kh;
                            if (ih < 0 || ih >= H) {
                                for (int64_t ow = 0; ow < OW; ++ow) col[idx++] = T(0);
                                continue;
                            }
                            const T* row = plane + ih * W;
                            for (int64_t ow = 0; ow < OW; ++ow) {
                                const int64_t iw = ow * stride - pad + kw;
                                col[idx++] = (iw >= 0 && iw < W) ? row[iw] : T(0);
                            }
                        }
                    }
    }
}

// Scatter-add inverse of vol2col3d (+= into x [C,D,H,W])
template <typename T>
void col2vol3d(const T* col, int64_t C, int64_t D, int64_t H, int64_t W, int64_t kD, int64_t kH,
               int64_t kW, int64_t stride, int64_t pad, int64_t OD, int64_t OH, int64_t OW, T* x) {
    int64_t idx = 0;
    for (int64_t c = 0; c < C; ++c) {
        T* xc = x + c * D * H * W;
        for (int64_t kd = 0; kd < kD; ++kd)
            for (int64_t kh = 0; kh < kH; ++kh)
                for (int64_t kw = 0; kw < kW; ++kw)
                    for (int64_t od = 0; od < OD; ++od) {
                        const int64_t id = od * stride - pad + kd;
                        if (id < 0 || id >= D) {
                            idx += OH * OW;
                            continue;
                        }
                        T* plane = xc + id * H * W;
                        for (int64_t oh = 0; oh < OH; ++oh) {
                            const int64_t ih = oh * stride - pad + kh;
                            if (ih < 0 || ih >= H) {
                                idx += OW;
                                continue;
                            }
                            T* row = plane + ih * W;
                            for (int64_t ow = 0; ow < OW; ++ow, ++idx) {
                                const int64_t iw = ow * stride - pad + kw;
                                if (iw >= 0 && iw < W) row[iw] += col[idx];
                            }
                        }
                    }
    }
}

}  // namespace detail
}  // namespace cfstereo
