#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "remixsep/parallel.hpp"
#include "remixsep/signals.hpp"

namespace remixsep {

enum class FeatureKind { log_magnitude, magnitude };
enum class MaskActivation { sigmoid, relu };

struct SeparatorConfig {
  int n_out = 3;
  FeatureKind feature = FeatureKind::log_magnitude;
  int hidden_width = 96;
  int n_blocks = 2;
  MaskActivation mask_activation = MaskActivation::sigmoid;
  bool zero_init_output = true;
  int conv_kernel = 5;
  StftParams stft;
};

void validate(const SeparatorConfig& cfg);
std::size_t spectrum_bins(const SeparatorConfig& cfg);

struct ParamEntry {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::size_t size() const { return rows * cols; }
};

struct ParamIndex {
  std::vector<ParamEntry> entries;
  std::size_t total = 0;
  const ParamEntry& at(const std::string& name) const;
  bool same_as(const ParamIndex& other) const;
};

std::shared_ptr<const ParamIndex> build_param_index(const SeparatorConfig& cfg);

// Flat parameter vector plus its named-shape index. Treated as an immutable
// snapshot by the trainer: updates build new vectors.
struct ParameterVector {
  std::shared_ptr<const ParamIndex> index;
  std::vector<double> values;

  double* at(const ParamEntry& e) { return values.data() + e.offset; }
  const double* at(const ParamEntry& e) const { return values.data() + e.offset; }
  const double* at(const std::string& name) const { return values.data() + index->at(name).offset; }
};

// Per-item activation record for backprop.
struct ItemTape {
  Spectrogram spec;                       // input spectrogram
  std::vector<double> feat;               // frames x bins
  std::vector<double> h_in;               // frames x H, input projection output
  struct BlockTape {
    std::vector<double> z1, u, a, g, s;   // frames x H
    std::vector<double> mean, inv_std;    // frames
    std::vector<double> h_out;            // frames x H
  };
  std::vector<BlockTape> blocks;
  std::vector<double> logits;             // frames x (N*bins)
  std::vector<double> mask;               // N x frames x bins
};

struct SeparatorTape {
  std::vector<ItemTape> items;
};

// Trainable STFT-mask separator: per-frame input projection, n_blocks of
// (feed-forward -> gated temporal depthwise conv -> residual -> layer norm),
// linear mask head. Masks multiply the complex input spectrogram; channels
// are inverted to waveforms and projected to mixture consistency.
class SeparatorModel {
 public:
  explicit SeparatorModel(SeparatorConfig cfg);

  const SeparatorConfig& config() const { return cfg_; }
  std::size_t bins() const { return bins_; }
  std::shared_ptr<const ParamIndex> param_index() const { return index_; }

  ParameterVector init_params(std::uint64_t seed) const;

  SourceStack separate(const ParameterVector& params, const WaveBatch& batch,
                       SeparatorTape* tape = nullptr,
                       ExecPolicy policy = ExecPolicy::parallel) const;

  // Accumulates dLoss/dparams into grad (size index->total) given
  // dLoss/d(outputs). Deterministic: per-item gradients are reduced in item
  // order regardless of thread count.
  void backward(const ParameterVector& params, const WaveBatch& batch, const SeparatorTape& tape,
                const SourceStack& grad_out, std::vector<double>& grad,
                ExecPolicy policy = ExecPolicy::parallel) const;

 private:
  SeparatorConfig cfg_;
  std::size_t bins_;
  std::shared_ptr<const ParamIndex> index_;
};

// Uniform-residual projection: s_n <- raw_n + (mix - sum_m raw_m)/N.
SourceStack mixture_consistency(const SourceStack& raw, const WaveBatch& mix);

std::uint64_t config_hash(const SeparatorConfig& cfg);

}  // namespace remixsep
