#pragma once

#include <string>

#include "remixsep/datagen.hpp"
#include "remixsep/separator.hpp"
#include "remixsep/training.hpp"

namespace remixsep {

struct DataConfig {
  int num_train = 2000;
  int num_val = 200;
  int num_test = 200;
  double duration_s = 2.0;
  int sample_rate = 8000;
  int k_min = 2;
  int k_max = 2;
  double snr_lo_db = -2.0;
  double snr_hi_db = 2.0;
  std::uint64_t seed = 1234;

  CorpusSpec split_spec(const std::string& split) const;
};

struct EvalConfig {
  int batch_size = 16;
};

struct ExperimentConfig {
  DataConfig data;
  SeparatorConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir;
};

// Flat `section.key = value` text, '#' comments. Unknown keys are rejected;
// serialization round-trips losslessly.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace remixsep
