#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "remixsep/datagen.hpp"
#include "remixsep/losses.hpp"
#include "remixsep/metrics.hpp"
#include "remixsep/remix.hpp"
#include "remixsep/separator.hpp"

namespace remixsep {

enum class TrainMethod {
  mixit,
  mixit_sparsity,
  mixpit,
  remixit,
  self_remixing,
  sup_remixit,
  sup_self_remixing,
  sup_pit,
};

std::string to_string(TrainMethod m);
TrainMethod train_method_from_string(const std::string& s);
bool is_supervised(TrainMethod m);
bool uses_remixing(TrainMethod m);

struct TrainConfig {
  TrainMethod method = TrainMethod::self_remixing;
  double alpha = 0.8;  // EMA teacher coefficient
  int epochs = 60;
  int batch_size = 8;
  double lr_peak = 2e-4;
  double lr_floor = 2e-5;
  int warmup_steps = 200;
  int constant_epochs = 10;
  double decay_factor = 0.98;
  int decay_every_epochs = 3;
  double grad_clip_norm = 5.0;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;
  // remix flags; unset picks the per-method default (channel shuffle on for
  // self_remixing, same-mixture avoidance on for remixit)
  std::optional<bool> use_channel_shuffle;
  std::optional<bool> avoid_same_mixture;
  int mixit_b_prime = 2;
  double sparsity_finetune_frac = 0.75;  // mixit_sparsity: plain MixIT before this
  std::string finetune_from;
  bool log_plans = false;
  int checkpoint_ring = 5;
  bool write_epoch_checkpoints = true;
  LossConfig loss{1e-3, 0.1, ZeroRefMode::soft_threshold};
};

void validate(const TrainConfig& cfg);
bool effective_channel_shuffle(const TrainConfig& cfg);
bool effective_avoid_same_mixture(const TrainConfig& cfg);

// alpha*teacher + (1-alpha)*student, elementwise.
ParameterVector ema_update(const ParameterVector& teacher, const ParameterVector& student,
                           double alpha);
// elementwise arithmetic mean of the stored vectors
ParameterVector average_checkpoints(const std::vector<ParameterVector>& ring);

struct AdamState {
  std::vector<double> m, v;
  long long t = 0;
};

struct TrainState {
  ParameterVector student;
  ParameterVector teacher;
  AdamState opt;
  int epoch = 0;
  long long global_step = 0;
  struct RingEntry {
    double score;
    int epoch;
    ParameterVector params;
  };
  std::vector<RingEntry> best;  // descending by score, bounded by checkpoint_ring
};

struct StepMetrics {
  long long step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  int skipped_items = 0;
  std::vector<std::int64_t> plan_record;  // filled when log_plans is set
};

struct EpochStats {
  int epoch = 0;
  double mean_train_loss = 0.0;
  double val_sisdri = 0.0;
  double lr_end = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  ParameterVector final_params;  // average of the best-checkpoint ring
  double best_val_sisdri = 0.0;
};

// Mixtures normalized per item; ground-truth rows kept raw alongside the norm
// parameters so supervised paths can move them into the normalized domain.
struct TrainBatch {
  WaveBatch mixtures;
  std::vector<NormParams> norm;
  SourceStack gt_sources;  // batch x k_max x T, empty when unavailable
  std::vector<int> k_active;
};

TrainBatch assemble_batch(const std::vector<MixtureExample>& corpus,
                          const std::vector<std::size_t>& indices, bool with_sources);

// Pooled validation score: mean over examples of the per-example mean SISDRi
// of the student's estimates against the ground-truth sources.
double evaluate_sisdri(const SeparatorModel& model, const ParameterVector& params,
                       const std::vector<MixtureExample>& corpus, int batch_size,
                       ExecPolicy policy = ExecPolicy::parallel);
std::vector<EvalRecord> evaluate_records(const SeparatorModel& model,
                                         const ParameterVector& params,
                                         const std::vector<MixtureExample>& corpus,
                                         int batch_size,
                                         ExecPolicy policy = ExecPolicy::parallel);

class Trainer {
 public:
  Trainer(SeparatorConfig model_cfg, TrainConfig cfg);

  const SeparatorModel& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }

  // base-schedule lr (warmup, constant, geometric decay with floor)
  double lr_at(long long step, int epoch) const;

  TrainState init_state() const;
  StepMetrics train_step(TrainState& state, const TrainBatch& batch, Rng& plan_rng) const;

  // Full loop: epochs over the train split, EMA teacher update and validation
  // at each epoch end, best-5 ring, final parameter averaging. step_log gets
  // one JSON line per step and per epoch when non-null.
  TrainReport run(const std::vector<MixtureExample>& train,
                  const std::vector<MixtureExample>& val, const std::string& out_dir,
                  std::ostream* step_log) const;

 private:
  SeparatorModel model_;
  TrainConfig cfg_;

  struct StepWork;
  double compute_loss_and_grad(TrainState& state, const TrainBatch& batch, Rng& plan_rng,
                               StepWork& work) const;
};

}  // namespace remixsep
