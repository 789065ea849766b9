#pragma once

// Checkpoint file:
//   char[5]  magic "ADCK1"
//   uint64   metadata length, then metadata as JSON text
//   uint32   parameter count
//   per parameter: uint32 name length, name, uint32 rank, uint32 dims[rank],
//                  uint8 trainable, float32 values (little-endian)

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adaug/net.hpp"

namespace adaug {

struct CheckpointMeta {
    NetworkConfig net;
    std::string role = "lesion";  // lesion, liver, step1
    std::string mode;
    std::uint64_t seed = 0;
    int epochs_trained = 0;
    bool has_optimizer_state = false;
    std::vector<double> class_weights;
    double gamma = 1.0;
    std::string init = "fresh";  // lineage: fresh or resume
    std::string config_digest;
    bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
    CheckpointMeta meta;
    SegmentationNet net;
};

void save_checkpoint(const std::filesystem::path& path, const SegmentationNet& net, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace adaug
