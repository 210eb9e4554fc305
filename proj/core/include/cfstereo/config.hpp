#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cfstereo {

enum class PyramidVariant { CFSPP, SPP, ASPP, PlainLFE, Plain3D };
enum class OptimizerKind { SGD, Adam };
enum class TextureKind { RandomNoise, SmoothedNoise };
enum class DisparityFieldKind { Constant, PlanarRamp, Blocks };
enum class DataMode { Overfit, Stream };

struct NetworkConfig {
    int64_t d_max = 64;
    int64_t base_channels = 32;
    std::array<int64_t, 3> block_counts{3, 15, 3};
    std::array<int64_t, 3> stage_channels{32, 64, 128};
    std::array<int64_t, 4> pyramid_pool_sizes{64, 32, 16, 8};
    std::array<int64_t, 4> pyramid_dilations{32, 12, 8, 4};
    PyramidVariant pyramid_variant = PyramidVariant::CFSPP;
    int64_t fusion_channels = 32;
    bool use_batchnorm = true;
    std::array<int64_t, 2> kernel_pair{3, 5};

    int64_t d_levels() const { return d_max / 8; }
    void validate() const;  // throws std::invalid_argument on any violation
};

struct TrainConfig {
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
    int64_t steps = 300;
    int64_t crop_h = 32;
    int64_t crop_w = 64;
    uint64_t seed = 1;
    int64_t checkpoint_every = 100;
    int64_t log_every = 10;

    void validate() const;
};

struct DataConfig {
    DataMode mode = DataMode::Overfit;
    TextureKind texture = TextureKind::SmoothedNoise;
    DisparityFieldKind field = DisparityFieldKind::PlanarRamp;
};

struct FullConfig {
    NetworkConfig net;
    TrainConfig train;
    DataConfig data;

    void validate() const;
};

// Line-based `key = value` text; '#' starts a comment, blank lines are
// skipped, unknown keys and malformed values are errors.
FullConfig parse_config(const std::string& text);
FullConfig load_config(const std::string& path);

// Canonical serialization; parse(serialize(c)) reproduces c exactly.
std::string serialize_config(const FullConfig& cfg);

const char* to_string(PyramidVariant v);
const char* to_string(OptimizerKind v);
const char* to_string(TextureKind v);
const char* to_string(DisparityFieldKind v);
const char* to_string(DataMode v);

}  // namespace cfstereo
