#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "fds/model.hpp"

namespace fds {

// Layout: 8-byte magic "FDSCKPT1", little-endian u64 header length, a JSON
// header (format version, model config, training seed, tensor directory),
// then the raw float64 payload. Doubles are stored bit-exactly.

struct CheckpointContents {
  ModelConfig config;
  std::uint64_t init_seed = 0;
  std::uint64_t training_seed = 0;
  std::map<std::string, Tensor> tensors;
  std::map<std::string, ag::BatchNormBuffers> buffers;
};

/// JSON text of the architecture fields (the pretrained path is not part of it).
std::string model_config_json(const ModelConfig& config);

void save_checkpoint(const std::filesystem::path& path, const SegmentationNet& model,
                     std::uint64_t training_seed);

CheckpointContents read_checkpoint(const std::filesystem::path& path);

/// Rebuilds the network described by the checkpoint and restores its state.
std::unique_ptr<SegmentationNet> load_checkpoint(const std::filesystem::path& path,
                                                 std::uint64_t* training_seed = nullptr);

/// Copies parameters and running statistics into an existing network;
/// throws DataError when names or shapes disagree.
void restore_state(SegmentationNet& model, const CheckpointContents& contents);

}  // namespace fds
