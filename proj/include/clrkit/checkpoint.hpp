#ifndef CLRKIT_CHECKPOINT_HPP
#define CLRKIT_CHECKPOINT_HPP

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

#include "clrkit/common.hpp"

namespace clrkit {

// Single-file container: magic, little-endian JSON header (version, step,
// config snapshot, array index), then raw little-endian tensor payloads.
// Round-trips are bit-identical.
struct CheckpointData {
    int version = 1;
    std::int64_t step = 0;
    std::string config_text;
    std::map<std::string, torch::Tensor> arrays;
};

using ModuleMap = std::map<std::string, torch::nn::Module*>;

void save_checkpoint(const std::filesystem::path& path, const ModuleMap& modules,
                     const std::string& config_text, std::int64_t step);

CheckpointData load_checkpoint_data(const std::filesystem::path& path);

// Copies arrays into the modules' parameters/buffers by name. When
// require_all, every module must be fully covered by the checkpoint.
void load_into_modules(const CheckpointData& data, const ModuleMap& modules,
                       bool require_all = true);

std::uint64_t checkpoint_file_hash(const std::filesystem::path& path);

}  // namespace clrkit

#endif
