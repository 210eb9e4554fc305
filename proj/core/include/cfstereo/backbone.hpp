#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "cfstereo/config.hpp"
#include "cfstereo/layers.hpp"

namespace cfstereo {

// Bottom/right zero padding up to the next multiple of m, with the original
// extents kept for cropping the final disparity map back.
template <typename T>
struct Padded {
    Tensor<T> image;
    int64_t orig_h = 0;
    int64_t orig_w = 0;
};

template <typename T>
Padded<T> pad_to_multiple(const Tensor<T>& image, int64_t m = 8);

// Residual pair of 3x3 convs; 1x1 projection shortcut whenever the block
// changes channels or stride.
template <typename T>
struct ResidualBlock2d {
    ConvBlock2d<T> conv1, conv2;
    std::optional<ConvBlock2d<T>> proj;

    Tensor<T> forward(const Tensor<T>& x, bool train) const;
};

// 2D feature pipeline stage 1: one stem conv, then three stages of residual
// blocks. The first block of every stage has stride 2, so the output sits at
// 1/8 of the input resolution with stage_channels[2] channels.
template <typename T>
struct FeatureExtractor {
    ConvBlock2d<T> conv0;
    std::vector<ResidualBlock2d<T>> blocks;

    FeatureExtractor() = default;
    FeatureExtractor(const NetworkConfig& cfg, ParamStore<T>& store, Rng& rng);

    // image [N,3,H,W] with H,W divisible by 8 -> [N,stage_channels[2],H/8,W/8]
    Tensor<T> forward(const Tensor<T>& image, bool train) const;

    // Stem conv plus two 3x3 convs per block; projection shortcuts are not
    // part of this count.
    int64_t conv_layer_count() const { return 1 + 2 * static_cast<int64_t>(blocks.size()); }
};

// One pyramid level: a dilated-conv branch and/or an adaptive-pooling branch,
// fused by a 3x3 conv when both are present.
template <typename T>
struct PyramidLevel {
    std::optional<ConvBlock2d<T>> dil1;   // 3x3, dilation = padding = level dilation
    std::optional<ConvBlock2d<T>> dil2;   // 1x1
    std::optional<ConvBlock2d<T>> pool1;  // 1x1 after adaptive pooling (no norm: grids can be 1x1)
    std::optional<ConvBlock2d<T>> fuse;   // 3x3 over the concatenated branches
    int64_t dilation = 1;
    int64_t pool_size = 8;
};

// Maps a nominal full-resolution pool size to the adaptive grid extent at
// feature scale: max(1, round(extent*8/pool_size)), clamped to the extent.
int64_t pyramid_grid_extent(int64_t feat_extent, int64_t pool_size);

// 2D feature pipeline stage 2: four pyramid levels plus a skip of the raw
// features, fused down to fusion_channels. Variants drop one branch per level
// (SPP keeps pooling, ASPP keeps dilation) or bypass the pyramid entirely
// with a single 1x1 conv (PlainLFE). The closing 1x1 conv is bare — no bias,
// norm, or activation — so scaling its weights scales the output exactly.
template <typename T>
struct ContextPyramid {
    PyramidVariant variant = PyramidVariant::CFSPP;
    std::vector<PyramidLevel<T>> levels;
    std::optional<ConvBlock2d<T>> final3;
    Tensor<T> final1_weight;

    ContextPyramid() = default;
    ContextPyramid(const NetworkConfig& cfg, ParamStore<T>& store, Rng& rng);

    // features [N,C3,h,w] -> [N,fusion_channels,h,w]
    Tensor<T> forward(const Tensor<T>& features, bool train) const;
};

}  // namespace cfstereo
