#pragma once

#include <cstdint>
#include <string>

#include "remixsep/separator.hpp"

namespace remixsep {

struct CheckpointMeta {
  std::uint64_t config_hash = 0;
  int epoch = 0;
  double val_score = 0.0;
  SeparatorConfig model;  // embedded so a checkpoint is loadable standalone
};

// Stable binary format: magic, JSON header (metadata + named-shape index),
// then the flat little-endian double vector.
void save_checkpoint(const std::string& path, const ParameterVector& params,
                     const CheckpointMeta& meta);
std::pair<ParameterVector, CheckpointMeta> load_checkpoint(const std::string& path);

}  // namespace remixsep
