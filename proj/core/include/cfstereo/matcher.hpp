#pragma once

#include <optional>
#include <vector>

#include "cfstereo/backbone.hpp"
#include "cfstereo/config.hpp"
#include "cfstereo/layers.hpp"

namespace cfstereo {

// One matching branch over the cost volume. The multi-scale form is an
// encoder (four convs, stride 2 on the 2nd and 4th) mirrored by two deconvs
// that restore cost-volume scale; the plain form keeps all four convs at
// stride 1 and needs no decoder. Output channels: 2*fusion_channels (plain)
// or fusion_channels (decoded), so two decoded branches concat to the same
// width the plain branch has.
template <typename T>
struct MatchBranch {
    ConvBlock3d<T> conv1, conv2, conv3, conv4;
    std::optional<DeconvBlock3d<T>> deconv1;  // mirrors conv4
    std::optional<DeconvBlock3d<T>> deconv2;  // mirrors conv2; bare output conv

    Tensor<T> forward(const Tensor<T>& volume, bool train) const;
};

// Cost-volume regularization: parallel branches (kernel sizes kernel_pair)
// fused to a 2-channel map, then three stride-2 deconvs recover full scale
// with the channel fold 2 -> 2 -> 2 -> 1; the last deconv is the bare
// regression head. A trilinear resize guards the rare off-by-one shape left
// by the deconv arithmetic.
template <typename T>
struct MatchingFusion {
    std::vector<MatchBranch<T>> branches;
    ConvBlock3d<T> fuse;
    DeconvBlock3d<T> up1, up2, up3;

    MatchingFusion() = default;
    MatchingFusion(const NetworkConfig& cfg, ParamStore<T>& store, Rng& rng);

    // volume [N,2C,D,h,w] -> costs [N,1,out_d,out_h,out_w]
    Tensor<T> forward(const Tensor<T>& volume, bool train, int64_t out_d, int64_t out_h,
                      int64_t out_w) const;
};

// The full pipeline: shared-weight feature extraction over both views, cost
// volume, matching fusion, soft-argmin regression.
template <typename T>
struct StereoNetwork {
    NetworkConfig cfg;
    ParamStore<T> store;
    FeatureExtractor<T> extractor;
    ContextPyramid<T> pyramid;
    MatchingFusion<T> matcher;

    StereoNetwork() = default;
    StereoNetwork(const NetworkConfig& config, uint64_t seed);

    // image [N,3,H,W], H and W divisible by 8 -> [N,C_feat,H/8,W/8]
    Tensor<T> features(const Tensor<T>& image, bool train) const;

    // left/right [N,3,H,W] (any extents; padded internally) -> [N,H,W]
    Tensor<T> forward(const Tensor<T>& left, const Tensor<T>& right, bool train) const;
};

}  // namespace cfstereo
