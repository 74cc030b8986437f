#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "apnea/nn/layers.hpp"

namespace apnea::nn {

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "APNCKPT1";

struct StoredTensor {
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const StoredTensor&, const StoredTensor&) = default;
};

/// Named float32 tensors plus the configuration that produced them.
///
/// File layout: the 8-byte magic "APNCKPT1", a little-endian uint64 header
/// length, a JSON header {format_version, rng_seed, config, tensors: [{name,
/// shape, offset, count}]}, then the float32 payloads back to back.
struct Checkpoint {
  int format_version = kCheckpointVersion;
  std::map<std::string, StoredTensor> tensors;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t rng_seed = 0;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws Error(CorruptCheckpoint) on malformed input and Error(VersionMismatch)
/// when the header's format_version is not kCheckpointVersion.
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every tensor of `state` into `ckpt` under `prefix` + name (float32).
void capture_state(const std::vector<StateRef>& state, Checkpoint& ckpt, const std::string& prefix = {});

/// Loads the tensors under `prefix` into `state`. The match must be one-to-one
/// with identical shapes, otherwise Error(CorruptCheckpoint).
void restore_state(const std::vector<StateRef>& state, const Checkpoint& ckpt, const std::string& prefix = {});

/// FNV-1a fingerprint over names and float64 values of `state`.
std::string state_hash(const std::vector<StateRef>& state);

}  // namespace apnea::nn
