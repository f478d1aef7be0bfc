#pragma once

// Versioned binary parameter container.
//
// Layout (little-endian):
//   "DEI2NCKP"  u32 version  u64 meta_len  meta (UTF-8 JSON)
//   u64 count, then per tensor:
//   u32 name_len  name  u32 rank  u64 dims[rank]  f64 values[prod(dims)]
// Values are stored bit-exactly.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dei2n/model.hpp"
#include "json.hpp"

namespace dei2n {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws DataError on a bad magic, unsupported version or truncation.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Stores the model config and ablation in the metadata under "model" and
/// "ablation", plus any caller-supplied `extra` keys.
void save_model(const std::filesystem::path& path, const ModelParams& params,
                const nlohmann::json& extra = nlohmann::json::object());
/// Rebuilds parameters from a checkpoint written by save_model.
ModelParams load_model(const std::filesystem::path& path);

}  // namespace dei2n
