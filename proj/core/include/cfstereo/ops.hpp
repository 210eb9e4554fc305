#pragma once

#include <cstdint>
#include <optional>
#include <type_traits>
#include <vector>

#include "cfstereo/tensor.hpp"

namespace cfstereo {

// ---- elementwise / shape ----

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);  // same shape

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);  // same shape

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T alpha);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);  // -> scalar

// Concatenate along `axis`; every other extent must match.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

// Keep the top-left h x w window of the last two axes (inverse of
// bottom/right zero padding).
template <typename T>
Tensor<T> crop2d(const Tensor<T>& x, int64_t h, int64_t w);

// Zero-pad the last two axes on the bottom/right up to h x w.
template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, int64_t h, int64_t w);

// ---- convolution ----

// input [N,C_in,H,W], weight [C_out,C_in,kH,kW], bias (optional) [C_out].
// out spatial extent: floor((X + 2*pad - dil*(k-1) - 1) / stride) + 1
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const std::type_identity_t<std::optional<Tensor<T>>>& bias,
                 int stride, int padding, int dilation = 1);

// input [N,C_in,D,H,W], weight [C_out,C_in,kD,kH,kW]
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const std::type_identity_t<std::optional<Tensor<T>>>& bias,
                 int stride, int padding);

// Transposed conv, the exact adjoint of conv3d: with the same weight W,
// <deconv3d(x; W), y> == <x, conv3d(y; W)>. Weight is laid out
// [C_in,C_out,kD,kH,kW]; out extent: (X - 1)*stride - 2*pad + k.
template <typename T>
Tensor<T> deconv3d(const Tensor<T>& input, const Tensor<T>& weight, const std::type_identity_t<std::optional<Tensor<T>>>& bias,
                   int stride, int padding);

// ---- pooling / resampling ----

// Non-overlapping window x window mean over the last two axes; a truncated
// last window averages over the cells it actually covers.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int window);

// Mean over torch-style adaptive bins: bin i covers [floor(i*H/out), ceil((i+1)*H/out)).
template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, int64_t out_h, int64_t out_w);

// Align-corners bilinear resize of the last two axes; upsample only.
template <typename T>
Tensor<T> bilinear_upsample2d(const Tensor<T>& x, int64_t out_h, int64_t out_w);

// Align-corners trilinear resize of the last three axes; upsample only.
template <typename T>
Tensor<T> trilinear_upsample3d(const Tensor<T>& x, int64_t out_d, int64_t out_h, int64_t out_w);

// ---- normalization ----

// Per-channel batch norm for [N,C,...] input. Train mode normalizes with
// batch statistics and folds them into the running buffers (momentum m:
// run = (1-m)*run + m*batch, variance stored unbiased); eval mode applies
// the running buffers as a fixed affine map.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var,
                    bool train, T momentum = T(0.1), T eps = T(1e-5));

// ---- stereo-specific ----

// left/right [N,C,H,W] -> [N,2C,d_levels,H,W]. Slice d holds the left
// features and the right features shifted d to the right; columns x < d of
// the shifted half are zero.
template <typename T>
Tensor<T> build_cost_volume(const Tensor<T>& left, const Tensor<T>& right, int64_t d_levels);

// costs [N,1,D,H,W] -> expected disparity [N,H,W] under softmax(-costs).
template <typename T>
Tensor<T> soft_argmin(const Tensor<T>& costs);

// Masked mean of smooth-L1 over gt - pred; pred [N,H,W] (or [H,W]), gt/mask
// flat arrays of the same element count. Scalar output.
template <typename T>
Tensor<T> masked_smooth_l1_loss(const Tensor<T>& pred, const std::vector<T>& gt,
                                const std::vector<uint8_t>& mask);

}  // namespace cfstereo
