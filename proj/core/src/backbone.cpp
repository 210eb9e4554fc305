#include "cfstereo/backbone.hpp"

#include <cmath>
#include <string>

#include "cfstereo/ops.hpp"
#include "op_common.hpp"

namespace cfstereo {

template <typename T>
Padded<T> pad_to_multiple(const Tensor<T>& image, int64_t m) {
    detail::check(m >= 1, "pad_to_multiple: m must be >= 1");
    detail::check(image.rank() >= 2, "pad_to_multiple: need at least 2 axes");
    const int64_t h = image.dim(image.rank() - 2);
    const int64_t w = image.dim(image.rank() - 1);
    const int64_t ph = (h + m - 1) / m * m;
    const int64_t pw = (w + m - 1) / m * m;
    Padded<T> out;
    out.orig_h = h;
    out.orig_w = w;
    out.image = (ph == h && pw == w) ? image : pad2d(image, ph, pw);
    return out;
}

template <typename T>
Tensor<T> ResidualBlock2d<T>::forward(const Tensor<T>& x, bool train) const {
    Tensor<T> y = conv2(conv1(x, train), train);
    Tensor<T> skip = proj ? (*proj)(x, train) : x;
    return relu(add(y, skip));
}

template <typename T>
FeatureExtractor<T>::FeatureExtractor(const NetworkConfig& cfg, ParamStore<T>& store, Rng& rng) {
    const bool bn = cfg.use_batchnorm;
    conv0 = ConvBlock2d<T>(store, rng, "extractor.conv0", 3, cfg.base_channels, 3, 1, 1, 1, bn, true);
    int64_t in_ch = cfg.base_channels;
    for (int s = 0; s < 3; ++s) {
        const int64_t out_ch = cfg.stage_channels[static_cast<size_t>(s)];
        for (int64_t b = 0; b < cfg.block_counts[static_cast<size_t>(s)]; ++b) {
            const int stride = (b == 0) ? 2 : 1;
            const std::string name = "extractor.stage" + std::to_string(s) + ".block" + std::to_string(b);
            ResidualBlock2d<T> block;
            block.conv1 = ConvBlock2d<T>(store, rng, name + ".conv1", in_ch, out_ch, 3, stride, 1, 1, bn, true);
            block.conv2 = ConvBlock2d<T>(store, rng, name + ".conv2", out_ch, out_ch, 3, 1, 1, 1, bn, false);
            if (stride != 1 || in_ch != out_ch)
                block.proj = ConvBlock2d<T>(store, rng, name + ".proj", in_ch, out_ch, 1, stride, 0, 1, bn, false);
            blocks.push_back(std::move(block));
            in_ch = out_ch;
        }
    }
}

template <typename T>
Tensor<T> FeatureExtractor<T>::forward(const Tensor<T>& image, bool train) const {
    detail::check_rank("FeatureExtractor::forward", image, 4);
    detail::check(image.dim(2) % 8 == 0 && image.dim(3) % 8 == 0,
                  "FeatureExtractor::forward: spatial extents " + std::to_string(image.dim(2)) + "x" +
                      std::to_string(image.dim(3)) + " must be divisible by 8 (pad first)");
    Tensor<T> y = conv0(image, train);
    for (const auto& block : blocks) y = block.forward(y, train);
    return y;
}

int64_t pyramid_grid_extent(int64_t feat_extent, int64_t pool_size) {
    const auto g = static_cast<int64_t>(
        std::llround(static_cast<double>(feat_extent) * 8.0 / static_cast<double>(pool_size)));
    return std::max<int64_t>(1, std::min(g, feat_extent));
}

template <typename T>
ContextPyramid<T>::ContextPyramid(const NetworkConfig& cfg, ParamStore<T>& store, Rng& rng)
    : variant(cfg.pyramid_variant) {
    const bool bn = cfg.use_batchnorm;
    const int64_t in_ch = cfg.stage_channels[2];
    const int64_t level_ch = cfg.fusion_channels;
    // Plain3D swaps the matching module, not the pyramid.
    const PyramidVariant v = (variant == PyramidVariant::Plain3D) ? PyramidVariant::CFSPP : variant;

    if (v == PyramidVariant::PlainLFE) {
        final1_weight = store.kaiming_param("pyramid.final1.weight", {level_ch, in_ch, 1, 1}, in_ch, rng);
        return;
    }

    const bool want_dil = (v != PyramidVariant::SPP);
    const bool want_pool = (v != PyramidVariant::ASPP);
    for (int i = 0; i < 4; ++i) {
        const std::string name = "pyramid.level" + std::to_string(i);
        PyramidLevel<T> level;
        level.dilation = cfg.pyramid_dilations[static_cast<size_t>(i)];
        level.pool_size = cfg.pyramid_pool_sizes[static_cast<size_t>(i)];
        if (want_dil) {
            const int d = static_cast<int>(level.dilation);
            level.dil1 = ConvBlock2d<T>(store, rng, name + ".dil1", in_ch, level_ch, 3, 1, d, d, bn, true);
            level.dil2 = ConvBlock2d<T>(store, rng, name + ".dil2", level_ch, level_ch, 1, 1, 0, 1, bn, true);
        }
        if (want_pool)
            level.pool1 = ConvBlock2d<T>(store, rng, name + ".pool1", in_ch, level_ch, 1, 1, 0, 1, false, true);
        if (want_dil && want_pool)
            level.fuse = ConvBlock2d<T>(store, rng, name + ".fuse", 2 * level_ch, level_ch, 3, 1, 1, 1, bn, true);
        levels.push_back(std::move(level));
    }
    const int64_t cat_ch = 4 * level_ch + in_ch;
    final3 = ConvBlock2d<T>(store, rng, "pyramid.final3", cat_ch, in_ch, 3, 1, 1, 1, bn, true);
    final1_weight = store.kaiming_param("pyramid.final1.weight", {level_ch, in_ch, 1, 1}, in_ch, rng);
}

template <typename T>
Tensor<T> ContextPyramid<T>::forward(const Tensor<T>& features, bool train) const {
    detail::check_rank("ContextPyramid::forward", features, 4);
    if (levels.empty()) return conv2d(features, final1_weight, std::nullopt, 1, 0);

    const int64_t h = features.dim(2);
    const int64_t w = features.dim(3);
    std::vector<Tensor<T>> parts;
    parts.reserve(levels.size() + 1);
    for (const auto& level : levels) {
        std::optional<Tensor<T>> dil_out, pool_out;
        if (level.dil1) dil_out = (*level.dil2)((*level.dil1)(features, train), train);
        if (level.pool1) {
            Tensor<T> p = adaptive_avg_pool2d(features, pyramid_grid_extent(h, level.pool_size),
                                              pyramid_grid_extent(w, level.pool_size));
            p = (*level.pool1)(p, train);
            pool_out = bilinear_upsample2d(p, h, w);
        }
        if (dil_out && pool_out)
            parts.push_back((*level.fuse)(concat(std::vector<Tensor<T>>{*dil_out, *pool_out}, 1), train));
        else
            parts.push_back(dil_out ? *dil_out : *pool_out);
    }
    parts.push_back(features);
    Tensor<T> y = (*final3)(concat(parts, 1), train);
    return conv2d(y, final1_weight, std::nullopt, 1, 0);
}

#define CFS_INSTANTIATE_BACKBONE(T)                                     \
    template Padded<T> pad_to_multiple<T>(const Tensor<T>&, int64_t);  \
    template struct ResidualBlock2d<T>;                                 \
    template struct FeatureExtractor<T>;                                \
    template struct ContextPyramid<T>;

CFS_INSTANTIATE_BACKBONE(float)
CFS_INSTANTIATE_BACKBONE(double)

}  // namespace cfstereo
