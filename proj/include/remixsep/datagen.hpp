#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remixsep/parallel.hpp"
#include "remixsep/signals.hpp"

namespace remixsep {

enum class SourceKind { tonal_chirp, am_noise, noise_burst, harmonic_stack };

struct SyntheticSource {
  SourceKind kind = SourceKind::tonal_chirp;
  bool active = false;
  double band_lo_hz = 0.0;
  double band_hi_hz = 0.0;
  double rms_db = 0.0;  // level relative to full scale
};

struct MixtureExample {
  std::string id;
  Waveform mixture;                  // exact sum of the source rows
  std::vector<Waveform> sources;     // k_max rows, inactive rows all-zero
  std::vector<SyntheticSource> meta; // one per row
  int k_active = 0;
  std::vector<double> snr_db;        // per active source, level used at synthesis
};

struct CorpusSpec {
  int num_examples = 2000;
  double duration_s = 2.0;
  int sample_rate = 8000;
  int k_min = 2;
  int k_max = 2;
  double snr_lo_db = -2.0;  // per-source level range, dB relative to the base level
  double snr_hi_db = 2.0;
  std::uint64_t seed = 1234;
};

void validate(const CorpusSpec& spec);

// Deterministic: example i depends only on (spec.seed, i), so serial and
// parallel synthesis agree bit-exactly.
MixtureExample synthesize_example(const CorpusSpec& spec, int index);
std::vector<MixtureExample> synthesize_corpus(const CorpusSpec& spec,
                                              ExecPolicy policy = ExecPolicy::parallel);

// Consecutive groups of b_prime mixtures summed into mixtures-of-mixtures,
// each re-normalized; norm parameters are kept so the raw sums stay
// recoverable.
struct MomBatch {
  WaveBatch moms;
  std::vector<NormParams> norm;
  std::vector<std::vector<std::size_t>> provenance;
};

MomBatch make_mom(const WaveBatch& batch, std::size_t b_prime);

// On-disk corpus layout: <dir>/mix/NNNNN.wav, <dir>/src/NNNNN_k.wav and a
// manifest.jsonl with one record per example.
void write_corpus(const std::string& dir, const std::vector<MixtureExample>& corpus,
                  std::uint64_t seed);
std::vector<MixtureExample> read_corpus(const std::string& dir);

}  // namespace remixsep
