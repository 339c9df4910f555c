#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

namespace afgan {

// Single-file archive: a format tag and version, the run config as JSON text,
// then every tensor keyed by its module path, in key order. Byte layout:
//
//   "AFGANCKPT\n"  u32 version  u64 len  <config json>
//   u64 count, then per tensor:
//     u32 len <name>  u8 dtype (0 f32, 1 f64, 2 i64)  u32 ndim  i64 dims[ndim]  <raw data>
//
// Integers are little-endian. Saving the same content always yields the same
// bytes.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json config;
  std::map<std::string, torch::Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws CheckpointError on a bad tag, unsupported version or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters and buffers of `module` keyed by "<prefix>.<path>".
std::map<std::string, torch::Tensor> collect_tensors(const torch::nn::Module& module,
                                                     const std::string& prefix = "");
/// Copies tensors back; any missing key or shape mismatch throws
/// CheckpointError.
void restore_tensors(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& tensors,
                     const std::string& prefix = "");

}  // namespace afgan
