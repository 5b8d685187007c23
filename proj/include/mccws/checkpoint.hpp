#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "mccws/model.hpp"
#include "mccws/optim.hpp"

namespace mccws {

// Binary checkpoint layout (all integers and floats little-endian):
//   "MCCWSCKP"  u32 version
//   u64 n, n bytes of ModelConfig JSON
//   u64 vocab hash
//   u32 tensor count, then per tensor:
//     u32 n, n bytes name, u32 rank, rank x u64 dims, f64 values
//   u8 has_optimizer; if set: u64 step, then m and v per tensor (f64)
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

struct LoadedCheckpoint {
  Model model;
  std::uint64_t vocab_hash = 0;
  std::optional<AdamWState> optimizer;
};

void write_checkpoint(std::ostream& out, const Model& model, std::uint64_t vocab_hash,
                      const AdamWState* optimizer = nullptr);
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     std::uint64_t vocab_hash, const AdamWState* optimizer = nullptr);

// Verifies every expected tensor name and shape; throws DataError.
LoadedCheckpoint read_checkpoint(std::istream& in);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mccws
