#pragma once

#include <string>

#include "fbkws/model.hpp"

namespace fbkws::checkpoint {

// Self-describing binary: "FBKWS1\n" magic, little-endian u64 header
// length, JSON header (configs plus a tensor directory with shapes and
// float offsets), then one contiguous float32 payload. Batch-norm running
// statistics are stored as tensors alongside the weights.
inline constexpr char kMagic[] = "FBKWS1\n";

void save(const std::string& path, model::KwsSystem& sys);

// Rebuilds the system from the stored configs and restores every tensor.
model::KwsSystem load(const std::string& path);

// Header-only peek, for tooling that needs configs without the payload.
struct Meta {
  frontend::FrontendConfig frontend;
  model::ModelConfig model;
};
Meta read_meta(const std::string& path);

}  // namespace fbkws::checkpoint
