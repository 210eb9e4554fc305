#include "cfstereo/matcher.hpp"

#include <string>

#include "cfstereo/ops.hpp"
#include "op_common.hpp"

namespace cfstereo {

namespace {

// Trilinear fix-up for the +-1 the stride-2 deconv arithmetic can leave.
template <typename T>
Tensor<T> resize_to(const Tensor<T>& x, int64_t d, int64_t h, int64_t w) {
    if (x.dim(2) == d && x.dim(3) == h && x.dim(4) == w) return x;
    return trilinear_upsample3d(x, d, h, w);
}

}  // namespace

template <typename T>
Tensor<T> MatchBranch<T>::forward(const Tensor<T>& volume, bool train) const {
    Tensor<T> y1 = conv1(volume, train);
    Tensor<T> y2 = conv2(y1, train);
    Tensor<T> y3 = conv3(y2, train);
    Tensor<T> y4 = conv4(y3, train);
    if (!deconv1) return y4;
    Tensor<T> z = (*deconv1)(y4, train);
    z = resize_to(z, y3.dim(2), y3.dim(3), y3.dim(4));
    Tensor<T> out = (*deconv2)(z, train);
    return resize_to(out, y1.dim(2), y1.dim(3), y1.dim(4));
}

template <typename T>
MatchingFusion<T>::MatchingFusion(const NetworkConfig& cfg, ParamStore<T>& store, Rng& rng) {
    const bool bn = cfg.use_batchnorm;
    const int64_t f = cfg.fusion_channels;
    const int64_t in_ch = 2 * f;  // cost volume concatenates both views
    const bool plain = cfg.pyramid_variant == PyramidVariant::Plain3D;

    const int n_branches = plain ? 1 : 2;
    for (int b = 0; b < n_branches; ++b) {
        const int k = plain ? 3 : static_cast<int>(cfg.kernel_pair[static_cast<size_t>(b)]);
        const int p = (k - 1) / 2;
        const int s = plain ? 1 : 2;
        const std::string name = "matcher.branch" + std::to_string(b);
        MatchBranch<T> branch;
        branch.conv1 = ConvBlock3d<T>(store, rng, name + ".conv1", in_ch, f, k, 1, p, bn, true);
        branch.conv2 = ConvBlock3d<T>(store, rng, name + ".conv2", f, f, k, s, p, bn, true);
        branch.conv3 = ConvBlock3d<T>(store, rng, name + ".conv3", f, 2 * f, k, 1, p, bn, true);
        branch.conv4 = ConvBlock3d<T>(store, rng, name + ".conv4", 2 * f, 2 * f, k, s, p, bn, true);
        if (!plain) {
            branch.deconv1 = DeconvBlock3d<T>(store, rng, name + ".deconv1", 2 * f, f, k, 2, p, bn, true);
            branch.deconv2 = DeconvBlock3d<T>(store, rng, name + ".deconv2", f, f, k, 2, p, false, false);
        }
        branches.push_back(std::move(branch));
    }
    fuse = ConvBlock3d<T>(store, rng, "matcher.fuse", 2 * f, 2, 3, 1, 1, bn, true);
    up1 = DeconvBlock3d<T>(store, rng, "matcher.up1", 2, 2, 4, 2, 1, bn, true);
    up2 = DeconvBlock3d<T>(store, rng, "matcher.up2", 2, 2, 4, 2, 1, bn, true);
    up3 = DeconvBlock3d<T>(store, rng, "matcher.up3", 2, 1, 4, 2, 1, false, false);
}

template <typename T>
Tensor<T> MatchingFusion<T>::forward(const Tensor<T>& volume, bool train, int64_t out_d,
                                     int64_t out_h, int64_t out_w) const {
    detail::check_rank("MatchingFusion::forward", volume, 5);
    detail::check(volume.dim(2) >= 1, "MatchingFusion::forward: need at least one disparity level");

    Tensor<T> fused;
    if (branches.size() == 1) {
        fused = branches[0].forward(volume, train);
    } else {
        std::vector<Tensor<T>> outs;
        outs.reserve(branches.size());
        for (const auto& branch : branches) outs.push_back(branch.forward(volume, train));
        fused = concat(outs, 1);
    }
    Tensor<T> costs = fuse(fused, train);
    costs = up1(costs, train);
    costs = up2(costs, train);
    costs = up3(costs, train);
    return resize_to(costs, out_d, out_h, out_w);
}

template <typename T>
StereoNetwork<T>::StereoNetwork(const NetworkConfig& config, uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(splitmix64(seed ^ 0x9e3779b97f4a7c15ull));
    extractor = FeatureExtractor<T>(cfg, store, rng);
    pyramid = ContextPyramid<T>(cfg, store, rng);
    matcher = MatchingFusion<T>(cfg, store, rng);
}

template <typename T>
Tensor<T> StereoNetwork<T>::features(const Tensor<T>& image, bool train) const {
    return pyramid.forward(extractor.forward(image, train), train);
}

template <typename T>
Tensor<T> StereoNetwork<T>::forward(const Tensor<T>& left, const Tensor<T>& right, bool train) const {
    detail::check_same_shape("StereoNetwork::forward", left, right);
    detail::check_rank("StereoNetwork::forward", left, 4);
    Padded<T> pl = pad_to_multiple(left, 8);
    Padded<T> pr = pad_to_multiple(right, 8);
    Tensor<T> fl = features(pl.image, train);
    Tensor<T> fr = features(pr.image, train);
    Tensor<T> volume = build_cost_volume(fl, fr, cfg.d_levels());
    Tensor<T> costs = matcher.forward(volume, train, cfg.d_max, pl.image.dim(2), pl.image.dim(3));
    Tensor<T> disparity = soft_argmin(costs);
    if (disparity.dim(1) != pl.orig_h || disparity.dim(2) != pl.orig_w)
        disparity = crop2d(disparity, pl.orig_h, pl.orig_w);
    return disparity;
}

#define CFS_INSTANTIATE_MATCHER(T)   \
    template struct MatchBranch<T>;  \
    template struct MatchingFusion<T>; \
    template struct StereoNetwork<T>;

CFS_INSTANTIATE_MATCHER(float)
CFS_INSTANTIATE_MATCHER(double)

}  // namespace cfstereo
