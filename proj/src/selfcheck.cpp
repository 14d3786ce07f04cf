#include "remixsep/selfcheck.hpp"

#include <cmath>
#include <sstream>

#include "remixsep/config.hpp"
#include "remixsep/datagen.hpp"
#include "remixsep/losses.hpp"
#include "remixsep/metrics.hpp"
#include "remixsep/remix.hpp"
#include "remixsep/rng.hpp"
#include "remixsep/separator.hpp"
#include "remixsep/training.hpp"

namespace remixsep {

namespace {

Waveform random_wave(Rng& rng, std::size_t n, int sr = 8000) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (auto& v : w.samples) v = rng.normal();
  return w;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    num += d * d;
    den += a[i] * a[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

bool check_signals(std::string& detail) {
  Rng rng(11);
  const StftParams p{256, 256, 64};
  for (int trial = 0; trial < 3; ++trial) {
    Waveform w = random_wave(rng, 4096);
    Waveform r = istft(stft(w, p), w.length(), w.sample_rate);
    const double err = rel_l2(w.samples, r.samples);
    if (err > 1e-5) {
      detail = "round-trip error " + std::to_string(err);
      return false;
    }
  }
  Waveform u = random_wave(rng, 2048), v = random_wave(rng, 2048);
  Spectrogram su = stft(u, p), sv = stft(v, p);
  Waveform lin = u;
  for (std::size_t i = 0; i < lin.samples.size(); ++i)
    lin.samples[i] = 2.0 * u.samples[i] - 0.5 * v.samples[i];
  Spectrogram sl = stft(lin, p);
  for (std::size_t i = 0; i < sl.data.size(); ++i) {
    const auto expect = 2.0 * su.data[i] - 0.5 * sv.data[i];
    if (std::abs(sl.data[i] - expect) > 1e-6) {
      detail = "stft not linear";
      return false;
    }
  }
  auto [norm, np] = normalize_mixture(random_wave(rng, 1000));
  double mean = 0.0, var = 0.0;
  for (double x : norm.samples) mean += x;
  mean /= 1000.0;
  for (double x : norm.samples) var += (x - mean) * (x - mean);
  var /= 1000.0;
  if (std::abs(mean) > 1e-6 || std::abs(std::sqrt(var) - 1.0) > 1e-6) {
    detail = "normalize_mixture moments off";
    return false;
  }
  return true;
}

bool check_datagen(std::string& detail) {
  CorpusSpec spec;
  spec.num_examples = 8;
  spec.duration_s = 0.25;
  spec.k_min = 1;
  spec.k_max = 3;
  spec.seed = 77;
  auto a = synthesize_corpus(spec, ExecPolicy::serial);
  auto b = synthesize_corpus(spec, ExecPolicy::parallel);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].mixture.samples != b[i].mixture.samples) {
      detail = "serial/parallel corpora differ";
      return false;
    }
    Waveform sum = a[i].mixture;
    std::fill(sum.samples.begin(), sum.samples.end(), 0.0);
    for (const auto& s : a[i].sources)
      for (std::size_t t = 0; t < sum.samples.size(); ++t) sum.samples[t] += s.samples[t];
    for (std::size_t t = 0; t < sum.samples.size(); ++t)
      if (sum.samples[t] != a[i].mixture.samples[t]) {
        detail = "mixture != sum of sources";
        return false;
      }
  }
  WaveBatch wb(4, 64, 8000);
  Rng rng(3);
  for (auto& x : wb.data) x = rng.normal();
  auto mom = make_mom(wb, 2);
  std::vector<char> seen(4, 0);
  for (const auto& g : mom.provenance)
    for (auto i : g) seen[i] = 1;
  for (char c : seen)
    if (!c) {
      detail = "MoM provenance does not cover the batch";
      return false;
    }
  return true;
}

bool check_remix(std::string& detail) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    RemixPlan plan = sample_plan(8, 3, true, trial % 2 == 0, rng);
    if (!plan_rows_distinct(plan)) {
      detail = "constrained plan has duplicate-origin row";
      return false;
    }
  }
  SourceStack s(5, 3, 32, 8000);
  for (auto& v : s.data) v = std::floor(rng.uniform(-8, 8));
  RemixPlan plan = sample_plan(5, 3, true, true, rng);
  PseudoBatch pb = remix_pseudo_mixtures(s, plan);
  SourceStack back = unshuffle(pb.shuffled_sources, plan);
  if (back.data != s.data) {
    detail = "unshuffle(shuffle(S)) != S";
    return false;
  }
  return true;
}

bool check_separator(std::string& detail) {
  SeparatorConfig cfg;
  cfg.n_out = 3;
  cfg.hidden_width = 16;
  cfg.n_blocks = 1;
  cfg.stft = {64, 64, 16};
  cfg.zero_init_output = true;
  SeparatorModel model(cfg);
  auto params = model.init_params(9);
  Rng rng(21);
  WaveBatch batch(2, 256, 8000);
  for (auto& v : batch.data) v = rng.normal();
  SourceStack out = model.separate(params, batch);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t n = 0; n < 3; ++n) {
      const double* o = out.chan(b, n);
      const double* x = batch.item(b);
      for (std::size_t t = 0; t < 256; ++t)
        if (std::abs(o[t] - x[t] / 3.0) > 1e-10) {
          detail = "zero-init outputs differ from mixture/N";
          return false;
        }
    }
  SourceStack raw(2, 3, 256, 8000);
  for (auto& v : raw.data) v = rng.normal();
  SourceStack mc = mixture_consistency(raw, batch);
  SourceStack mc2 = mixture_consistency(mc, batch);
  for (std::size_t b = 0; b < 2; ++b) {
    const double* x = batch.item(b);
    for (std::size_t t = 0; t < 256; ++t) {
      double sum = 0.0;
      for (std::size_t n = 0; n < 3; ++n) sum += mc.chan(b, n)[t];
      if (std::abs(sum - x[t]) > 1e-9) {
        detail = "MC outputs do not sum to mixture";
        return false;
      }
    }
  }
  for (std::size_t i = 0; i < mc.data.size(); ++i)
    if (std::abs(mc.data[i] - mc2.data[i]) > 1e-9) {
      detail = "MC not idempotent";
      return false;
    }
  return true;
}

bool check_losses(std::string& detail) {
  Rng rng(31);
  Waveform y = random_wave(rng, 512);
  const double tau = 1e-3;
  const double at_floor = snr_loss(y, y, tau);
  if (std::abs(at_floor + 30.0) > 1e-6) {
    detail = "snr_loss(y,y) != -30";
    return false;
  }
  Waveform zero = y;
  std::fill(zero.samples.begin(), zero.samples.end(), 0.0);
  const double vs_zero = snr_loss(y, zero, tau);
  if (std::abs(vs_zero + 10.0 * std::log10(1.0 / (1.0 + tau))) > 1e-9) {
    detail = "snr_loss(y,0) closed form off";
    return false;
  }
  // lower bound with equality iff estimate == reference
  for (int trial = 0; trial < 50; ++trial) {
    Waveform e = random_wave(rng, 512);
    if (snr_loss(y, e, tau) < -30.0 - 1e-9) {
      detail = "snr_loss below clamp floor";
      return false;
    }
  }
  return true;
}

bool check_training(std::string& detail) {
  SeparatorConfig mc;
  mc.n_out = 2;
  mc.hidden_width = 8;
  mc.n_blocks = 1;
  mc.stft = {64, 64, 16};
  SeparatorModel model(mc);
  auto a = model.init_params(1);
  auto b = model.init_params(2);
  auto ema = ema_update(a, b, 0.8);
  for (std::size_t i = 0; i < ema.values.size(); ++i) {
    const double lo = std::min(a.values[i], b.values[i]);
    const double hi = std::max(a.values[i], b.values[i]);
    if (ema.values[i] < lo - 1e-12 || ema.values[i] > hi + 1e-12) {
      detail = "EMA not between teacher and student";
      return false;
    }
  }
  auto avg = average_checkpoints({a, a, a});
  if (avg.values != a.values) {
    detail = "average of identical checkpoints differs";
    return false;
  }
  return true;
}

bool check_metrics(std::string& detail) {
  Rng rng(41);
  Waveform y = random_wave(rng, 400);
  Waveform e = random_wave(rng, 400);
  const double base = sisdr(y, e);
  Waveform e3 = e;
  for (auto& v : e3.samples) v *= 3.0;
  if (std::abs(base - sisdr(y, e3)) > 1e-9) {
    detail = "sisdr not scale invariant";
    return false;
  }
  if (sisdr(y, y) < kSisdrCapDb - 1e-9) {
    detail = "exact estimate not at cap";
    return false;
  }
  return true;
}

bool check_config(std::string& detail) {
  ExperimentConfig cfg;
  cfg.output_dir = "runs/demo";
  const std::string s1 = serialize_config(cfg);
  const std::string s2 = serialize_config(parse_config(s1));
  if (s1 != s2) {
    detail = "config round trip not lossless";
    return false;
  }
  return true;
}

}  // namespace

std::vector<CheckResult> run_selfchecks() {
  std::vector<CheckResult> results;
  auto run = [&](const std::string& name, bool (*fn)(std::string&)) {
    CheckResult r;
    r.name = name;
    try {
      r.pass = fn(r.detail);
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = e.what();
    }
    results.push_back(std::move(r));
  };
  run("signals.invariants", check_signals);
  run("datagen.invariants", check_datagen);
  run("remix.invariants", check_remix);
  run("separator.invariants", check_separator);
  run("losses.invariants", check_losses);
  run("training.invariants", check_training);
  run("metrics.invariants", check_metrics);
  run("config.round_trip", check_config);
  return results;
}

}  // namespace remixsep
