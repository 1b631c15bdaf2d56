#pragma once
// Model snapshots: "MLCC" magic, a format version, the canonical config
// text, then every named parameter as (name, extents, float32 payload),
// little-endian throughout. Loading rebuilds the model from the embedded
// config and overwrites each parameter with the stored payload, so a loaded
// model carries float32-rounded values by design.

#include <string>

#include "mlcc/model.hpp"

namespace mlcc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::string& path);

// Throws IoError on unreadable or malformed files and ConfigError on a
// version mismatch.
Model load_checkpoint(const std::string& path);

}  // namespace mlcc
