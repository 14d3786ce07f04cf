#include "remixsep/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "remixsep/checkpoint.hpp"

namespace remixsep {

namespace {
using json = nlohmann::json;

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

bool all_zero(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] != 0.0) return false;
  return true;
}

}  // namespace

std::string to_string(TrainMethod m) {
  switch (m) {
    case TrainMethod::mixit: return "mixit";
    case TrainMethod::mixit_sparsity: return "mixit_sparsity";
    case TrainMethod::mixpit: return "mixpit";
    case TrainMethod::remixit: return "remixit";
    case TrainMethod::self_remixing: return "self_remixing";
    case TrainMethod::sup_remixit: return "sup_remixit";
    case TrainMethod::sup_self_remixing: return "sup_self_remixing";
    case TrainMethod::sup_pit: return "sup_pit";
  }
  return "?";
}

TrainMethod train_method_from_string(const std::string& s) {
  for (auto m : {TrainMethod::mixit, TrainMethod::mixit_sparsity, TrainMethod::mixpit,
                 TrainMethod::remixit, TrainMethod::self_remixing, TrainMethod::sup_remixit,
                 TrainMethod::sup_self_remixing, TrainMethod::sup_pit})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown training method: " + s);
}

bool is_supervised(TrainMethod m) {
  return m == TrainMethod::sup_remixit || m == TrainMethod::sup_self_remixing ||
         m == TrainMethod::sup_pit;
}

bool uses_remixing(TrainMethod m) {
  return m == TrainMethod::remixit || m == TrainMethod::self_remixing ||
         m == TrainMethod::sup_remixit || m == TrainMethod::sup_self_remixing;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw std::invalid_argument("train: alpha must be in [0,1]");
  if (cfg.lr_floor > cfg.lr_peak) throw std::invalid_argument("train: lr_floor > lr_peak");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("train: bad sizes");
  if (cfg.loss.tau <= 0.0) throw std::invalid_argument("train: tau must be positive");
  if (cfg.loss.sparsity_weight < 0.0) throw std::invalid_argument("train: negative sparsity weight");
  if (cfg.mixit_b_prime < 2) throw std::invalid_argument("train: mixit_b_prime must be >= 2");
  if (cfg.decay_every_epochs < 1) throw std::invalid_argument("train: decay_every_epochs < 1");
}

bool effective_channel_shuffle(const TrainConfig& cfg) {
  if (cfg.use_channel_shuffle.has_value()) return *cfg.use_channel_shuffle;
  return cfg.method == TrainMethod::self_remixing || cfg.method == TrainMethod::sup_self_remixing;
}

bool effective_avoid_same_mixture(const TrainConfig& cfg) {
  if (cfg.avoid_same_mixture.has_value()) return *cfg.avoid_same_mixture;
  return cfg.method == TrainMethod::remixit || cfg.method == TrainMethod::sup_remixit;
}

ParameterVector ema_update(const ParameterVector& teacher, const ParameterVector& student,
                           double alpha) {
  if (!teacher.index || !student.index || !teacher.index->same_as(*student.index))
    throw std::invalid_argument("ema_update: parameter index mismatch");
  ParameterVector out;
  out.index = teacher.index;
  out.values.resize(teacher.values.size());
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = alpha * teacher.values[i] + (1.0 - alpha) * student.values[i];
  return out;
}

ParameterVector average_checkpoints(const std::vector<ParameterVector>& ring) {
  if (ring.empty()) throw std::invalid_argument("average_checkpoints: empty ring");
  for (const auto& p : ring)
    if (!p.index->same_as(*ring.front().index))
      throw std::invalid_argument("average_checkpoints: mixed shape indices");
  ParameterVector out;
  out.index = ring.front().index;
  out.values.assign(ring.front().values.size(), 0.0);
  for (const auto& p : ring)
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += p.values[i];
  const double inv = 1.0 / static_cast<double>(ring.size());
  for (double& v : out.values) v *= inv;
  return out;
}

TrainBatch assemble_batch(const std::vector<MixtureExample>& corpus,
                          const std::vector<std::size_t>& indices, bool with_sources) {
  if (indices.empty()) throw std::invalid_argument("assemble_batch: empty index set");
  const std::size_t T = corpus[indices[0]].mixture.length();
  const int sr = corpus[indices[0]].mixture.sample_rate;
  const std::size_t k_max = corpus[indices[0]].sources.size();
  TrainBatch batch;
  batch.mixtures = WaveBatch(indices.size(), T, sr);
  batch.norm.resize(indices.size());
  batch.k_active.resize(indices.size());
  if (with_sources) batch.gt_sources = SourceStack(indices.size(), k_max, T, sr);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& ex = corpus[indices[i]];
    if (ex.mixture.length() != T) throw std::invalid_argument("assemble_batch: ragged lengths");
    std::copy_n(ex.mixture.samples.data(), T, batch.mixtures.item(i));
    batch.norm[i] = normalize_mixture_inplace(batch.mixtures.item(i), T);
    batch.k_active[i] = ex.k_active;
    if (with_sources)
      for (std::size_t k = 0; k < k_max && k < ex.sources.size(); ++k)
        std::copy_n(ex.sources[k].samples.data(), T, batch.gt_sources.chan(i, k));
  }
  return batch;
}

Trainer::Trainer(SeparatorConfig model_cfg, TrainConfig cfg)
    : model_(std::move(model_cfg)), cfg_(std::move(cfg)) {
  validate(cfg_);
}

double Trainer::lr_at(long long step, int epoch) const {
  double base = cfg_.lr_peak;
  if (epoch >= cfg_.constant_epochs) {
    const int k = (epoch - cfg_.constant_epochs) / cfg_.decay_every_epochs;
    base = std::max(cfg_.lr_peak * std::pow(cfg_.decay_factor, k), cfg_.lr_floor);
  }
  if (cfg_.warmup_steps > 0 && step < cfg_.warmup_steps)
    base *= static_cast<double>(step) / static_cast<double>(cfg_.warmup_steps);
  return base;
}

TrainState Trainer::init_state() const {
  TrainState st;
  if (!cfg_.finetune_from.empty()) {
    auto [params, meta] = load_checkpoint(cfg_.finetune_from);
    if (meta.config_hash != config_hash(model_.config()))
      throw std::invalid_argument("finetune_from: checkpoint built with a different model config");
    if (!params.index->same_as(*model_.param_index()))
      throw std::invalid_argument("finetune_from: parameter index mismatch");
    params.index = model_.param_index();
    st.student = std::move(params);
  } else {
    st.student = model_.init_params(cfg_.seed);
  }
  st.teacher = st.student;  // both start identical
  st.opt.m.assign(model_.param_index()->total, 0.0);
  st.opt.v.assign(model_.param_index()->total, 0.0);
  return st;
}

struct Trainer::StepWork {
  int skipped_items = 0;
  std::vector<std::int64_t> plan_record;
  std::vector<double> grad;
};

// Builds the ground-truth source stack in the normalized-mixture domain,
// zero-padded to n_out channels; the mixture mean is spread equally over the
// active rows so the rows still sum to the normalized mixture exactly.
static SourceStack normalized_gt_stack(const TrainBatch& batch, std::size_t n_out) {
  if (batch.gt_sources.batch == 0)
    throw std::invalid_argument("supervised method requires ground-truth sources");
  const std::size_t B = batch.mixtures.batch, T = batch.mixtures.length;
  const std::size_t k_max = batch.gt_sources.channels;
  if (k_max > n_out)
    throw std::invalid_argument("supervised method: k_max exceeds separator output channels");
  SourceStack out(B, n_out, T, batch.mixtures.sample_rate);
  for (std::size_t b = 0; b < B; ++b) {
    const int k_act = std::max(batch.k_active[b], 1);
    const double mu = batch.norm[b].mean / static_cast<double>(k_act);
    const double inv_sd = 1.0 / batch.norm[b].std;
    for (int k = 0; k < batch.k_active[b]; ++k) {
      const double* src = batch.gt_sources.chan(b, static_cast<std::size_t>(k));
      double* dst = out.chan(b, static_cast<std::size_t>(k));
      for (std::size_t t = 0; t < T; ++t) dst[t] = (src[t] - mu) * inv_sd;
    }
  }
  return out;
}

double Trainer::compute_loss_and_grad(TrainState& state, const TrainBatch& batch, Rng& plan_rng,
                                      StepWork& work) const {
  const std::size_t B = batch.mixtures.batch;
  const std::size_t T = batch.mixtures.length;
  const std::size_t N = static_cast<std::size_t>(model_.config().n_out);
  const LossConfig& lc = cfg_.loss;
  work.grad.assign(model_.param_index()->total, 0.0);

  const TrainMethod m = cfg_.method;

  if (m == TrainMethod::mixit || m == TrainMethod::mixit_sparsity || m == TrainMethod::mixpit) {
    const std::size_t bp = (m == TrainMethod::mixpit) ? N : static_cast<std::size_t>(cfg_.mixit_b_prime);
    MomBatch moms = make_mom(batch.mixtures, bp);
    const std::size_t groups = moms.moms.batch;

    SeparatorTape tape;
    SourceStack est = model_.separate(state.student, moms.moms, &tape);
    SourceStack grad_est(groups, N, T, batch.mixtures.sample_rate);

    const bool sparsity_on =
        m == TrainMethod::mixit_sparsity &&
        state.epoch >= static_cast<int>(std::floor(cfg_.sparsity_finetune_frac * cfg_.epochs));

    double loss = 0.0;
    WaveBatch refs(bp, T, batch.mixtures.sample_rate);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t j = 0; j < bp; ++j)
        std::copy_n(batch.mixtures.item(moms.provenance[g][j]), T, refs.item(j));
      const ConstRow est_row = row(est, g);
      if (m == TrainMethod::mixpit) {
        AssignmentResult r = mixpit_loss(refs, est_row, lc);
        loss += r.loss_value / static_cast<double>(groups);
        mixpit_backward(refs, est_row, r, lc, 1.0 / static_cast<double>(groups),
                        grad_est.chan(g, 0));
      } else {
        AssignmentResult r = mixit_loss(refs, est_row, lc);
        const double w = 1.0 / static_cast<double>(groups * bp);
        loss += r.loss_value * w;
        mixit_backward(refs, est_row, r, lc, w, grad_est.chan(g, 0));
        if (sparsity_on) {
          const double sw = 1.0 / static_cast<double>(groups);
          loss += sw * sparsity_regularizer(est_row, moms.moms.item(g), lc.sparsity_weight);
          sparsity_regularizer_grad(est_row, moms.moms.item(g), lc.sparsity_weight * sw,
                                    grad_est.chan(g, 0));
        }
      }
    }
    model_.backward(state.student, moms.moms, tape, grad_est, work.grad);
    return loss;
  }

  if (m == TrainMethod::sup_pit) {
    const SourceStack targets = normalized_gt_stack(batch, N);
    SeparatorTape tape;
    SourceStack est = model_.separate(state.student, batch.mixtures, &tape);
    std::vector<double> mix_energy(B);
    for (std::size_t b = 0; b < B; ++b) mix_energy[b] = energy(batch.mixtures.item(b), T);
    PitBatchResult r = remixit_loss(targets, est, lc, /*zero_ref=*/true, &mix_energy);
    SourceStack grad_est(B, N, T, batch.mixtures.sample_rate);
    remixit_backward(targets, est, r, lc, true, &mix_energy, 1.0, grad_est);
    model_.backward(state.student, batch.mixtures, tape, grad_est, work.grad);
    for (std::size_t b = 0; b < B; ++b)
      if (!r.item_used[b]) ++work.skipped_items;
    return r.loss;
  }

  // remixing family: teacher (or ground truth) -> shuffle -> student
  SourceStack teacher_out;
  if (is_supervised(m)) {
    teacher_out = normalized_gt_stack(batch, N);
  } else {
    teacher_out = model_.separate(state.teacher, batch.mixtures);
  }
  RemixPlan plan = sample_plan(B, N, effective_avoid_same_mixture(cfg_),
                               effective_channel_shuffle(cfg_), plan_rng);
  if (cfg_.log_plans) work.plan_record = serialize_plan(plan);
  PseudoBatch pseudo = remix_pseudo_mixtures(teacher_out, plan);

  // all-zero pseudo-mixtures are excluded from training
  std::vector<char> skip(B, 0);
  for (std::size_t b = 0; b < B; ++b) {
    if (all_zero(pseudo.mixtures.item(b), T)) {
      skip[b] = 1;
      ++work.skipped_items;
    }
  }

  SeparatorTape tape;
  // pseudo-mixtures are fed raw (no normalization on this path)
  SourceStack student_out = model_.separate(state.student, pseudo.mixtures, &tape);
  std::vector<double> mix_energy(B);
  for (std::size_t b = 0; b < B; ++b) mix_energy[b] = energy(pseudo.mixtures.item(b), T);

  SourceStack grad_est(B, N, T, batch.mixtures.sample_rate);
  double loss = 0.0;
  const bool zr = is_supervised(m);
  if (m == TrainMethod::remixit || m == TrainMethod::sup_remixit) {
    PitBatchResult r =
        remixit_loss(pseudo.shuffled_sources, student_out, lc, zr, &mix_energy, &skip);
    remixit_backward(pseudo.shuffled_sources, student_out, r, lc, zr, &mix_energy, 1.0, grad_est);
    loss = r.loss;
  } else {
    SelfRemixResult r = self_remixing_loss(student_out, pseudo.shuffled_sources, plan,
                                           batch.mixtures, lc, zr, &mix_energy, &skip);
    self_remixing_backward(student_out, r, plan, batch.mixtures, lc, 1.0, grad_est);
    loss = r.loss;
  }
  model_.backward(state.student, pseudo.mixtures, tape, grad_est, work.grad);
  return loss;
}

StepMetrics Trainer::train_step(TrainState& state, const TrainBatch& batch, Rng& plan_rng) const {
  StepWork work;
  const double loss = compute_loss_and_grad(state, batch, plan_rng, work);
  if (!std::isfinite(loss)) {
    json dump{{"step", state.global_step}, {"epoch", state.epoch}, {"plan", work.plan_record}};
    throw std::runtime_error("train_step: non-finite loss; diagnostics: " + dump.dump());
  }

  // global-norm clip
  double norm2 = 0.0;
  for (double g : work.grad) norm2 += g * g;
  const double gnorm = std::sqrt(norm2);
  if (cfg_.grad_clip_norm > 0.0 && gnorm > cfg_.grad_clip_norm) {
    const double s = cfg_.grad_clip_norm / gnorm;
    for (double& g : work.grad) g *= s;
  }

  // AdamW with decoupled weight decay
  const double lr = lr_at(state.global_step, state.epoch);
  auto& opt = state.opt;
  opt.t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(opt.t));
  ParameterVector next = state.student;
  for (std::size_t i = 0; i < next.values.size(); ++i) {
    const double g = work.grad[i];
    opt.m[i] = kAdamBeta1 * opt.m[i] + (1.0 - kAdamBeta1) * g;
    opt.v[i] = kAdamBeta2 * opt.v[i] + (1.0 - kAdamBeta2) * g * g;
    const double mhat = opt.m[i] / bc1;
    const double vhat = opt.v[i] / bc2;
    next.values[i] -= lr * (mhat / (std::sqrt(vhat) + kAdamEps) +
                            cfg_.weight_decay * next.values[i]);
  }
  state.student = std::move(next);

  StepMetrics sm;
  sm.step = state.global_step;
  sm.epoch = state.epoch;
  sm.loss = loss;
  sm.lr = lr;
  sm.grad_norm = gnorm;
  sm.skipped_items = work.skipped_items;
  sm.plan_record = std::move(work.plan_record);
  state.global_step += 1;
  return sm;
}

std::vector<EvalRecord> evaluate_records(const SeparatorModel& model,
                                         const ParameterVector& params,
                                         const std::vector<MixtureExample>& corpus,
                                         int batch_size, ExecPolicy policy) {
  std::vector<EvalRecord> records;
  const std::size_t chunk = std::max(batch_size, 1);
  for (std::size_t start = 0; start < corpus.size(); start += chunk) {
    const std::size_t count = std::min(chunk, corpus.size() - start);
    const std::size_t T = corpus[start].mixture.length();
    WaveBatch wb(count, T, corpus[start].mixture.sample_rate);
    for (std::size_t i = 0; i < count; ++i) {
      std::copy_n(corpus[start + i].mixture.samples.data(), T, wb.item(i));
      normalize_mixture_inplace(wb.item(i), T);
    }
    SourceStack est = model.separate(params, wb, nullptr, policy);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& ex = corpus[start + i];
      std::vector<const double*> refs;
      for (int k = 0; k < ex.k_active; ++k)
        refs.push_back(ex.sources[static_cast<std::size_t>(k)].samples.data());
      if (refs.empty()) continue;
      records.push_back(evaluate_example(ex.id, refs, T, row(est, i),
                                         ex.mixture.samples.data()));
    }
  }
  return records;
}

double evaluate_sisdri(const SeparatorModel& model, const ParameterVector& params,
                       const std::vector<MixtureExample>& corpus, int batch_size,
                       ExecPolicy policy) {
  const auto records = evaluate_records(model, params, corpus, batch_size, policy);
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : records) {
    double s = 0.0;
    for (double v : r.sisdri) s += v;
    sum += s / static_cast<double>(std::max<std::size_t>(r.sisdri.size(), 1));
  }
  return sum / static_cast<double>(records.size());
}

TrainReport Trainer::run(const std::vector<MixtureExample>& train,
                         const std::vector<MixtureExample>& val, const std::string& out_dir,
                         std::ostream* step_log) const {
  if (train.empty()) throw std::invalid_argument("run_training: empty train split");
  namespace fs = std::filesystem;
  if (!out_dir.empty()) fs::create_directories(fs::path(out_dir) / "ckpt");

  TrainState state = init_state();
  Rng plan_rng = Rng::derive(cfg_.seed, 0x504c414eULL);
  TrainReport report;

  const bool with_sources = is_supervised(cfg_.method);
  auto flush_log = [&] {
    if (step_log) step_log->flush();
  };

  try {
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      state.epoch = epoch;
      Rng shuffle_rng =
          Rng::derive(cfg_.seed, 0x53485546ULL ^ (static_cast<std::uint64_t>(epoch) << 8));
      auto order = shuffle_rng.permutation(train.size());

      double loss_sum = 0.0;
      std::size_t steps = 0;
      double last_lr = 0.0;
      const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
      for (std::size_t start = 0; start + bs <= order.size(); start += bs) {
        std::vector<std::size_t> idx(order.begin() + start, order.begin() + start + bs);
        TrainBatch batch = assemble_batch(train, idx, with_sources);
        StepMetrics sm = train_step(state, batch, plan_rng);
        loss_sum += sm.loss;
        ++steps;
        last_lr = sm.lr;
        if (step_log) {
          json line{{"type", "step"},     {"step", sm.step},           {"epoch", sm.epoch},
                    {"loss", sm.loss},    {"lr", sm.lr},               {"grad_norm", sm.grad_norm},
                    {"skipped", sm.skipped_items}};
          if (cfg_.log_plans) line["plan"] = sm.plan_record;
          (*step_log) << line.dump() << "\n";
        }
      }

      // teacher follows the student at every epoch end
      state.teacher = ema_update(state.teacher, state.student, cfg_.alpha);

      EpochStats es;
      es.epoch = epoch;
      es.mean_train_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
      es.val_sisdri =
          val.empty() ? 0.0 : evaluate_sisdri(model_, state.student, val, cfg_.batch_size);
      es.lr_end = last_lr;
      report.epochs.push_back(es);

      // best-checkpoint ring, descending score
      TrainState::RingEntry entry{es.val_sisdri, epoch, state.student};
      state.best.insert(std::upper_bound(state.best.begin(), state.best.end(), entry,
                                         [](const auto& a, const auto& b) {
                                           return a.score > b.score;
                                         }),
                        std::move(entry));
      if (state.best.size() > static_cast<std::size_t>(std::max(cfg_.checkpoint_ring, 1)))
        state.best.resize(static_cast<std::size_t>(std::max(cfg_.checkpoint_ring, 1)));

      if (!out_dir.empty() && cfg_.write_epoch_checkpoints) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch%03d.bin", epoch);
        save_checkpoint((fs::path(out_dir) / "ckpt" / name).string(), state.student,
                        {config_hash(model_.config()), epoch, es.val_sisdri, model_.config()});
      }
      if (step_log) {
        json line{{"type", "epoch"},
                  {"epoch", epoch},
                  {"mean_train_loss", es.mean_train_loss},
                  {"val_sisdri", es.val_sisdri},
                  {"teacher_update", true}};
        (*step_log) << line.dump() << "\n";
      }
    }
  } catch (...) {
    flush_log();
    throw;
  }

  std::vector<ParameterVector> ring;
  for (const auto& e : state.best) ring.push_back(e.params);
  report.final_params = ring.empty() ? state.student : average_checkpoints(ring);
  report.best_val_sisdri = state.best.empty() ? 0.0 : state.best.front().score;
  if (!out_dir.empty())
    save_checkpoint((fs::path(out_dir) / "ckpt" / "best_avg.bin").string(), report.final_params,
                    {config_hash(model_.config()), cfg_.epochs - 1, report.best_val_sisdri,
                     model_.config()});
  flush_log();
  return report;
}

}  // namespace remixsep
