#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfstereo/ops.hpp"
#include "cfstereo/tensor.hpp"

namespace cfstereo {

// One training/evaluation example. Images are stored network-ready as
// [1,3,H,W] with values in [0,1]; gt and valid are row-major H*W.
template <typename T>
struct StereoSample {
    Tensor<T> left, right;
    std::vector<T> gt;
    std::vector<uint8_t> valid;
    int64_t height = 0, width = 0;
};

inline double smooth_l1(double x) {
    const double ax = std::abs(x);
    return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

// Mean smooth-L1 over the sample's valid pixels; rejects an all-invalid mask.
template <typename T>
Tensor<T> loss(const Tensor<T>& pred, const StereoSample<T>& sample) {
    return masked_smooth_l1_loss(pred, sample.gt, sample.valid);
}

// Valid pixels the regression head can represent: 0 < gt < d_max.
template <typename T>
std::vector<uint8_t> training_mask(const StereoSample<T>& sample, int d_max);

template <typename T>
double epe(const std::vector<T>& pred, const std::vector<T>& gt, const std::vector<uint8_t>& mask);

// Fraction of valid pixels with |pred - gt| > threshold_px.
template <typename T>
double bad_pixel_rate(const std::vector<T>& pred, const std::vector<T>& gt,
                      const std::vector<uint8_t>& mask, double threshold_px);

// KITTI 2015 D1 rule: a pixel is erroneous when |err| > 3 px AND > 5% of gt.
// Regions with no pixels report an absent rate rather than zero.
struct D1Result {
    std::optional<double> bg, fg, all;
    int64_t bg_count = 0, fg_count = 0, valid_count = 0;
};

template <typename T>
D1Result d1_metrics(const std::vector<T>& pred, const std::vector<T>& gt,
                    const std::vector<uint8_t>& fg_mask, const std::vector<uint8_t>& valid_mask);

struct MetricReport {
    double epe = 0.0;
    double bad_1 = 0.0, bad_3 = 0.0, bad_4 = 0.0, bad_5 = 0.0;
    int64_t valid_count = 0;
    std::optional<double> d1_bg, d1_fg, d1_all;
    int64_t bg_count = 0, fg_count = 0;

    std::string to_lines() const;  // flat key=value text, one metric per line
};

// Full report over one prediction; pass fg to split D1 into bg/fg regions.
template <typename T>
MetricReport evaluate_disparity(const std::vector<T>& pred, const std::vector<T>& gt,
                                const std::vector<uint8_t>& valid,
                                const std::vector<uint8_t>* fg = nullptr);

}  // namespace cfstereo
