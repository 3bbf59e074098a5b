#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attrenh/layers.hpp"

namespace attrenh {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::string role;  // "param", "buffer" or "optimizer"
  Tensor<float> value;

  bool operator==(const NamedTensor&) const = default;
};

/// One network's weights with the run metadata needed to resume or reuse it.
/// On disk: "AENH", u32 version, u64 header length, JSON header, then the
/// float32 payload, all little-endian. The header's tensor index gives each
/// tensor's offset (in floats) into the payload; offsets tile it exactly.
struct Checkpoint {
  std::string kind;
  std::string config_hash;
  int epoch = 0;
  std::int64_t optimizer_steps = 0;
  std::string rng_state;
  /// Free-form JSON object (network geometry, schema, ...).
  std::string meta = "{}";
  std::vector<NamedTensor> tensors;

  bool operator==(const Checkpoint&) const = default;
};

std::string checkpoint_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Refuses a file whose kind or config hash differs from the expected ones
/// (empty expectations are not checked).
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind = "",
                           const std::string& expected_hash = "");

/// Appends every parameter and buffer of `set` under its own name.
void store_params(Checkpoint& ckpt, const ParamSet<float>& set);
/// Appends optimizer slot tensors as "<param>#<slot>".
void store_slots(Checkpoint& ckpt, const ParamSet<float>& set, const std::string& slot,
                 const std::vector<Tensor<float>>& values);
/// Copies stored values into `set`; names and shapes must match exactly.
void restore_params(const Checkpoint& ckpt, const ParamSet<float>& set);
/// Loads slot tensors if present; returns false when the checkpoint has none.
bool restore_slots(const Checkpoint& ckpt, const ParamSet<float>& set, const std::string& slot,
                   std::vector<Tensor<float>>& values);

}  // namespace attrenh
