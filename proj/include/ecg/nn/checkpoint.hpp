#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ecg/nn/model.hpp"

namespace ecg::nn {

inline constexpr char kCheckpointMagic[4] = {'C', 'V', 'A', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (all integers and floats little-endian):
//   "CVAE"  u32 version
//   u32 input_channels  u32 latent_dim  u32 include_log_var_head
//   f64 bn_momentum  f64 bn_epsilon  u64 seed
//   u32 encoder_layers  u32 classifier_layers
//   per layer: u32 kind  u32 units  u32 kernel  u32 pool  f64 rate
//   u64 value_count
//   value_count f64 parameter values, blocks in manifest order
std::vector<unsigned char> encode_checkpoint(const ModelState& state);
ModelState decode_checkpoint(const std::vector<unsigned char>& bytes);

/// Size in bytes of the header that precedes the parameter values.
std::size_t checkpoint_header_size(const ModelConfig& config);

void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace ecg::nn
