#pragma once

#include <map>
#include <string>
#include <vector>

#include "remixsep/losses.hpp"
#include "remixsep/signals.hpp"

namespace remixsep {

inline constexpr double kSisdrCapDb = 100.0;

// Scale-invariant SDR in dB, capped at +-100. Rejects all-zero references;
// zero or orthogonal estimates hit the lower cap.
double sisdr(const double* reference, const double* estimate, std::size_t n);
double sisdr(const Waveform& reference, const Waveform& estimate);

struct EvalRecord {
  std::string example_id;
  int k_active = 0;
  std::vector<double> per_source_sisdr;  // dB, matched estimates
  std::vector<double> mixture_sisdr;     // dB, mixture vs each reference
  std::vector<double> sisdri;            // improvement over the mixture
};

struct AggregateReport {
  double one_s = 0.0;                // mean SISDR over k=1 examples
  bool one_s_defined = false;
  std::map<int, double> k_si;        // mean SISDRi per k >= 2
  double m_si = 0.0;                 // pooled mean SISDRi over k >= 2 examples
  bool m_si_defined = false;
  double trf = 0.0;                  // mean over all examples (SISDR if k=1 else SISDRi)
  std::size_t num_examples = 0;
};

// Injective matching of K references onto N estimates maximizing mean SISDR;
// exhaustive over arrangements for N <= 8, Hungarian beyond. Low-energy
// estimate channels stay in the pool.
std::vector<std::size_t> match_references(const std::vector<const double*>& refs,
                                          const ConstRow& estimates, std::size_t length);

EvalRecord evaluate_example(const std::string& id, const std::vector<const double*>& references,
                            std::size_t length, const ConstRow& estimates,
                            const double* mixture);

AggregateReport aggregate(const std::vector<EvalRecord>& records);

}  // namespace remixsep
