#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "indistill/models.hpp"
#include "indistill/optim.hpp"

namespace indistill {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  OptimizerState<float> optimizer;  // empty when not saved
  std::string optimizer_kind;
  long epoch = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::map<std::string, std::string> metadata;
};

// Layout: "IDST", u32 LE version, u64 LE header length, JSON header, then raw
// little-endian float32 blobs (parameters, batchnorm running stats, optimizer
// moments) in header order.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace indistill
