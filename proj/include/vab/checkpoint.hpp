#pragma once

#include <map>
#include <string>

#include "vab/model.hpp"

namespace vab {

/// Contents of a VABM file: a kind tag ("backbone", "c2f", "ar", "head",
/// "probe", ...), the architecture config as key=value text, free-form
/// metadata (stage lineage, step counts) and named parameter tensors.
struct Checkpoint {
  std::string kind;
  std::string config_text;
  std::map<std::string, std::string> metadata;
  ParamStore params;
};

// Layout: "VABM", u32 version, kind, config text, metadata text (all u32
// length-prefixed), u32 tensor count, then per tensor: name, u32 rank, u64
// dims, f64 values; finally the CRC32 of every preceding byte.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Throws ValidationError on bad magic, version, truncation or CRC mismatch.
Checkpoint load_checkpoint(const std::string& path);

void save_model(const MultiwayModel& model, const std::string& kind,
                const std::map<std::string, std::string>& metadata, const std::string& path);
// Rejects a checkpoint whose kind differs from `expected_kind` (when non-empty).
MultiwayModel load_model(const std::string& path, const std::string& expected_kind,
                         std::map<std::string, std::string>* metadata = nullptr);

}  // namespace vab
