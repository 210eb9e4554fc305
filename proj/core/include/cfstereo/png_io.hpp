#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfstereo/tensor.hpp"

namespace cfstereo {

// KITTI disparity convention: 16-bit grayscale PNG, disparity = stored/256,
// stored 0 marks an invalid pixel.
struct KittiDisparity {
    int64_t width = 0, height = 0;
    std::vector<float> disp;
    std::vector<uint8_t> valid;
};

KittiDisparity read_kitti_disp_png(const std::string& path);
void write_kitti_disp_png(const std::string& path, const std::vector<float>& disp, int64_t width,
                          int64_t height);

// 8-bit image IO for the CLI: values in [0,1], shape [1,C,H,W] with C of 1
// (grayscale) or 3 (RGB); reading always yields C=3.
Tensor<float> read_image_png(const std::string& path);
void write_image_png(const std::string& path, const Tensor<float>& image);

}  // namespace cfstereo
