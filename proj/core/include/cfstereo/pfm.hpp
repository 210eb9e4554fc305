#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cfstereo {

// Portable FloatMap: "Pf" = 1 channel, "PF" = 3 interleaved channels. File
// rows run bottom-to-top; `data` is top-to-bottom row-major. A negative scale
// marks a little-endian payload.
struct PfmImage {
    int64_t width = 0, height = 0, channels = 1;
    std::vector<float> data;
    double scale = -1.0;
};

PfmImage read_pfm(const std::string& path);
void write_pfm(const std::string& path, const PfmImage& img, bool little_endian = true);

}  // namespace cfstereo
