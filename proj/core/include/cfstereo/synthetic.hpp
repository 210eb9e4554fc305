#pragma once

#include <cstdint>
#include <vector>

#include "cfstereo/config.hpp"
#include "cfstereo/objective.hpp"
#include "cfstereo/tensor.hpp"

namespace cfstereo {

struct SyntheticSpec {
    int64_t width = 64;
    int64_t height = 32;
    int64_t d_max = 16;
    TextureKind texture = TextureKind::SmoothedNoise;
    DisparityFieldKind field = DisparityFieldKind::PlanarRamp;
    uint64_t seed = 0;
};

// Builds a stereo pair from a texture and a disparity field. The texture is
// the right image; left(x,y) samples right at (x - d(x,y), y) bilinearly, so
// the warp identity |right(x-d, y) - left(x, y)| holds exactly at valid
// pixels. Validity = warp source inside the frame AND not occluded per the
// per-row z-buffer test (a pixel further right whose warp lands at or left of
// ours is nearer and covers us).
template <typename T>
StereoSample<T> synthesize_pair(const Tensor<T>& right_texture, const std::vector<T>& disparity);

// Deterministic per spec: texture and field streams are derived separately
// from the seed, and all generated disparities lie in [1, d_max-1].
template <typename T>
StereoSample<T> generate_sample(const SyntheticSpec& spec);

}  // namespace cfstereo
