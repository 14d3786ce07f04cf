#include "remixsep/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "remixsep/rng.hpp"
#include "remixsep/wav_io.hpp"

namespace remixsep {

namespace {

using json = nlohmann::json;

constexpr double kBaseLevelDb = -20.0;  // RMS base relative to full scale
constexpr double kBandLoHz = 200.0;

double rms(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return std::sqrt(e / std::max<std::size_t>(x.size(), 1));
}

void scale_to_rms(std::vector<double>& x, double target) {
  const double r = rms(x);
  if (r <= 0.0) return;
  const double g = target / r;
  for (double& v : x) v *= g;
}

// RBJ constant-skirt bandpass biquad
void bandpass_inplace(std::vector<double>& x, double fc, double bw_hz, int sr) {
  const double w0 = 2.0 * std::numbers::pi * fc / sr;
  const double q = std::max(fc / std::max(bw_hz, 1.0), 0.5);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double b0 = alpha, b1 = 0.0, b2 = -alpha;
  const double a0 = 1.0 + alpha, a1 = -2.0 * std::cos(w0), a2 = 1.0 - alpha;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& v : x) {
    const double in = v;
    const double out = (b0 * in + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2) / a0;
    x2 = x1; x1 = in;
    y2 = y1; y1 = out;
    v = out;
  }
}

std::vector<double> synth_tonal_chirp(Rng& rng, std::size_t T, int sr, double lo, double hi) {
  std::vector<double> x(T);
  const double f_a = rng.uniform(lo, hi);
  const double f_b = rng.uniform(lo, hi);
  double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t t = 0; t < T; ++t) {
    const double frac = static_cast<double>(t) / static_cast<double>(T);
    const double f = f_a + (f_b - f_a) * frac;
    phase += 2.0 * std::numbers::pi * f / sr;
    x[t] = std::sin(phase);
  }
  return x;
}

std::vector<double> synth_harmonic_stack(Rng& rng, std::size_t T, int sr, double lo, double hi) {
  std::vector<double> x(T, 0.0);
  const double f0 = rng.uniform(lo, std::min(hi, lo * 1.4));
  double vib_rate = rng.uniform(3.0, 7.0);
  double vib_depth = rng.uniform(0.0, 0.01);
  int partials = 0;
  for (int h = 1; h * f0 <= hi && h <= 5; ++h) ++partials;
  partials = std::max(partials, 1);
  for (int h = 1; h <= partials; ++h) {
    const double amp = 1.0 / h;
    double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t t = 0; t < T; ++t) {
      const double vib = 1.0 + vib_depth * std::sin(2.0 * std::numbers::pi * vib_rate * t / sr);
      phase += 2.0 * std::numbers::pi * h * f0 * vib / sr;
      x[t] += amp * std::sin(phase);
    }
  }
  return x;
}

std::vector<double> synth_am_noise(Rng& rng, std::size_t T, int sr, double lo, double hi) {
  std::vector<double> x(T);
  for (double& v : x) v = rng.normal();
  bandpass_inplace(x, 0.5 * (lo + hi), hi - lo, sr);
  const double fm = rng.uniform(2.0, 8.0);
  const double depth = rng.uniform(0.3, 0.9);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t t = 0; t < T; ++t)
    x[t] *= 1.0 + depth * std::sin(2.0 * std::numbers::pi * fm * t / sr + phi);
  return x;
}

std::vector<double> synth_noise_burst(Rng& rng, std::size_t T, int sr, double lo, double hi) {
  std::vector<double> x(T);
  for (double& v : x) v = rng.normal();
  bandpass_inplace(x, 0.5 * (lo + hi), hi - lo, sr);
  // long burst so sources overlap in time
  const std::size_t onset = static_cast<std::size_t>(rng.uniform(0.0, 0.25) * T);
  const std::size_t len = static_cast<std::size_t>(rng.uniform(0.6, 0.95) * T);
  const std::size_t ramp = std::max<std::size_t>(T / 50, 8);
  for (std::size_t t = 0; t < T; ++t) {
    double env = 0.0;
    if (t >= onset && t < std::min(onset + len, T)) {
      const std::size_t k = t - onset;
      const std::size_t end = std::min(onset + len, T) - onset;
      env = 1.0;
      if (k < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * k / ramp);
      if (end - k <= ramp) env = std::min(env, 0.5 - 0.5 * std::cos(std::numbers::pi * (end - k) / ramp));
    }
    x[t] *= env;
  }
  return x;
}

}  // namespace

void validate(const CorpusSpec& spec) {
  if (spec.num_examples <= 0) throw std::invalid_argument("corpus: num_examples must be positive");
  if (spec.duration_s <= 0.0) throw std::invalid_argument("corpus: duration must be positive");
  if (spec.sample_rate <= 0) throw std::invalid_argument("corpus: sample_rate must be positive");
  if (!(1 <= spec.k_min && spec.k_min <= spec.k_max))
    throw std::invalid_argument("corpus: need 1 <= k_min <= k_max");
  if (spec.snr_lo_db > spec.snr_hi_db) throw std::invalid_argument("corpus: bad snr range");
}

MixtureExample synthesize_example(const CorpusSpec& spec, int index) {
  validate(spec);
  Rng rng = Rng::derive(spec.seed, static_cast<std::uint64_t>(index));
  const auto T = static_cast<std::size_t>(spec.duration_s * spec.sample_rate);
  const int sr = spec.sample_rate;

  MixtureExample ex;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  ex.id = buf;
  ex.k_active = static_cast<int>(rng.uniform_int(spec.k_min, spec.k_max));
  ex.sources.assign(spec.k_max, Waveform{std::vector<double>(T, 0.0), sr});
  ex.meta.assign(spec.k_max, SyntheticSource{});

  // Sources draw distinct bands from a pool twice as large as k_max: disjoint
  // within an example (a TF mask can always separate them) while mixtures
  // across the corpus differ in band occupancy.
  const double band_hi = 0.45 * sr;
  const std::size_t n_bands = 2 * static_cast<std::size_t>(spec.k_max);
  const double band_w = (band_hi - kBandLoHz) / static_cast<double>(n_bands);
  auto band_order = rng.permutation(n_bands);

  for (int k = 0; k < ex.k_active; ++k) {
    const double lo = kBandLoHz + band_w * static_cast<double>(band_order[k]) + 0.05 * band_w;
    const double hi = lo + 0.9 * band_w;
    const auto kind = static_cast<SourceKind>(rng.uniform_int(0, 3));
    std::vector<double> s;
    switch (kind) {
      case SourceKind::tonal_chirp: s = synth_tonal_chirp(rng, T, sr, lo, hi); break;
      case SourceKind::am_noise: s = synth_am_noise(rng, T, sr, lo, hi); break;
      case SourceKind::noise_burst: s = synth_noise_burst(rng, T, sr, lo, hi); break;
      case SourceKind::harmonic_stack: s = synth_harmonic_stack(rng, T, sr, lo, hi); break;
    }
    const double level_db = kBaseLevelDb + rng.uniform(spec.snr_lo_db, spec.snr_hi_db);
    scale_to_rms(s, std::pow(10.0, level_db / 20.0));
    ex.sources[k].samples = std::move(s);
    ex.meta[k] = SyntheticSource{kind, true, lo, hi, level_db};
    ex.snr_db.push_back(level_db);
  }

  ex.mixture.sample_rate = sr;
  ex.mixture.samples.assign(T, 0.0);
  for (int k = 0; k < ex.k_active; ++k)
    for (std::size_t t = 0; t < T; ++t) ex.mixture.samples[t] += ex.sources[k].samples[t];
  return ex;
}

std::vector<MixtureExample> synthesize_corpus(const CorpusSpec& spec, ExecPolicy policy) {
  validate(spec);
  std::vector<MixtureExample> out(static_cast<std::size_t>(spec.num_examples));
  parallel_for(out.size(), policy,
               [&](std::size_t i) { out[i] = synthesize_example(spec, static_cast<int>(i)); });
  return out;
}

MomBatch make_mom(const WaveBatch& batch, std::size_t b_prime) {
  if (b_prime < 2) throw std::invalid_argument("make_mom: b_prime must be >= 2");
  if (batch.batch == 0 || batch.batch % b_prime != 0)
    throw std::invalid_argument("make_mom: batch size not divisible by b_prime");
  const std::size_t groups = batch.batch / b_prime;
  MomBatch out;
  out.moms = WaveBatch(groups, batch.length, batch.sample_rate);
  out.norm.resize(groups);
  out.provenance.resize(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    double* mom = out.moms.item(g);
    for (std::size_t j = 0; j < b_prime; ++j) {
      const std::size_t b = g * b_prime + j;
      out.provenance[g].push_back(b);
      const double* x = batch.item(b);
      for (std::size_t t = 0; t < batch.length; ++t) mom[t] += x[t];
    }
    out.norm[g] = normalize_mixture_inplace(mom, batch.length);
  }
  return out;
}

void write_corpus(const std::string& dir, const std::vector<MixtureExample>& corpus,
                  std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "mix");
  fs::create_directories(fs::path(dir) / "src");
  std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("corpus: cannot write manifest in " + dir);
  for (const auto& ex : corpus) {
    const std::string mix_rel = "mix/" + ex.id + ".wav";
    write_wav((fs::path(dir) / mix_rel).string(), ex.mixture);
    json rec{{"id", ex.id}, {"mix", mix_rel}, {"k", ex.k_active}, {"snr_db", ex.snr_db},
             {"seed", seed}};
    auto srcs = json::array();
    for (std::size_t k = 0; k < ex.sources.size(); ++k) {
      const std::string src_rel = "src/" + ex.id + "_" + std::to_string(k) + ".wav";
      write_wav((fs::path(dir) / src_rel).string(), ex.sources[k]);
      srcs.push_back(src_rel);
    }
    rec["sources"] = srcs;
    manifest << rec.dump() << "\n";
  }
}

std::vector<MixtureExample> read_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("corpus: cannot open manifest in " + dir);
  std::vector<MixtureExample> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    MixtureExample ex;
    ex.id = rec.at("id").get<std::string>();
    ex.k_active = rec.at("k").get<int>();
    ex.snr_db = rec.at("snr_db").get<std::vector<double>>();
    ex.mixture = read_wav((fs::path(dir) / rec.at("mix").get<std::string>()).string());
    for (const auto& s : rec.at("sources"))
      ex.sources.push_back(read_wav((fs::path(dir) / s.get<std::string>()).string()));
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace remixsep
