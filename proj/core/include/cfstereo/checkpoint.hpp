#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfstereo/tensor.hpp"

namespace cfstereo {

// Binary model snapshot: magic "CFPN", format version, a key=value config
// block (the step counter rides along as its last line), then named f32
// tensors, closed by a CRC32 of everything before it. Optimizer state is
// stored as ordinary tensors under an "opt/" name prefix.
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string name;
    Shape dims;
    std::vector<float> data;
};

struct Checkpoint {
    int64_t step = 0;
    std::string config_text;
    std::vector<CheckpointEntry> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& state);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cfstereo
