#include "remixsep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "remixsep/hungarian.hpp"

namespace remixsep {

double sisdr(const double* reference, const double* estimate, std::size_t n) {
  const double ref_energy = energy(reference, n);
  if (ref_energy <= 0.0) throw std::invalid_argument("sisdr: all-zero reference");
  const double alpha = dot(estimate, reference, n) / ref_energy;
  const double num = alpha * alpha * ref_energy;
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = alpha * reference[i] - estimate[i];
    den += d * d;
  }
  if (num <= 0.0) return -kSisdrCapDb;
  if (den <= 0.0) return kSisdrCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kSisdrCapDb, kSisdrCapDb);
}

double sisdr(const Waveform& reference, const Waveform& estimate) {
  if (reference.length() != estimate.length())
    throw std::invalid_argument("sisdr: length mismatch");
  return sisdr(reference.samples.data(), estimate.samples.data(), reference.length());
}

namespace {

void best_arrangement(const std::vector<double>& score, std::size_t K, std::size_t N,
                      std::size_t k, std::vector<char>& used, std::vector<std::size_t>& cur,
                      double acc, std::vector<std::size_t>& best, double& best_score) {
  if (k == K) {
    if (acc > best_score) {
      best_score = acc;
      best = cur;
    }
    return;
  }
  for (std::size_t n = 0; n < N; ++n) {
    if (used[n]) continue;
    used[n] = 1;
    cur[k] = n;
    best_arrangement(score, K, N, k + 1, used, cur, acc + score[k * N + n], best, best_score);
    used[n] = 0;
  }
}

}  // namespace

std::vector<std::size_t> match_references(const std::vector<const double*>& refs,
                                          const ConstRow& estimates, std::size_t length) {
  const std::size_t K = refs.size();
  const std::size_t N = estimates.channels;
  if (K == 0) throw std::invalid_argument("match_references: no references");
  if (K > N) throw std::invalid_argument("match_references: more references than estimates");

  std::vector<double> score(K * N);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t n = 0; n < N; ++n) score[k * N + n] = sisdr(refs[k], estimates.chan(n), length);

  if (N <= 8) {
    std::vector<char> used(N, 0);
    std::vector<std::size_t> cur(K), best(K);
    double best_score = -std::numeric_limits<double>::infinity();
    best_arrangement(score, K, N, 0, used, cur, 0.0, best, best_score);
    return best;
  }
  // square min-cost problem with dummy rows for the unmatched estimates
  std::vector<double> cost(N * N, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t n = 0; n < N; ++n) cost[k * N + n] = -score[k * N + n];
  std::vector<std::size_t> row_to_col;
  hungarian(cost, N, row_to_col);
  row_to_col.resize(K);
  return row_to_col;
}

EvalRecord evaluate_example(const std::string& id, const std::vector<const double*>& references,
                            std::size_t length, const ConstRow& estimates,
                            const double* mixture) {
  EvalRecord rec;
  rec.example_id = id;
  rec.k_active = static_cast<int>(references.size());
  const auto match = match_references(references, estimates, length);
  for (std::size_t k = 0; k < references.size(); ++k) {
    const double est_sisdr = sisdr(references[k], estimates.chan(match[k]), length);
    const double mix_sisdr = sisdr(references[k], mixture, length);
    rec.per_source_sisdr.push_back(est_sisdr);
    rec.mixture_sisdr.push_back(mix_sisdr);
    rec.sisdri.push_back(est_sisdr - mix_sisdr);
  }
  return rec;
}

AggregateReport aggregate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  AggregateReport rep;
  rep.num_examples = records.size();
  double one_sum = 0.0;
  std::size_t one_count = 0;
  std::map<int, std::pair<double, std::size_t>> k_sums;
  double multi_sum = 0.0;
  std::size_t multi_count = 0;
  double trf_sum = 0.0;

  for (const auto& r : records) {
    double mean_sisdr = 0.0, mean_sisdri = 0.0;
    for (double v : r.per_source_sisdr) mean_sisdr += v;
    for (double v : r.sisdri) mean_sisdri += v;
    const double kk = static_cast<double>(std::max(r.k_active, 1));
    mean_sisdr /= kk;
    mean_sisdri /= kk;
    if (r.k_active <= 1) {
      one_sum += mean_sisdr;
      ++one_count;
      trf_sum += mean_sisdr;
    } else {
      auto& slot = k_sums[r.k_active];
      slot.first += mean_sisdri;
      ++slot.second;
      multi_sum += mean_sisdri;
      ++multi_count;
      trf_sum += mean_sisdri;
    }
  }
  if (one_count > 0) {
    rep.one_s = one_sum / static_cast<double>(one_count);
    rep.one_s_defined = true;
  }
  for (const auto& [k, slot] : k_sums) rep.k_si[k] = slot.first / static_cast<double>(slot.second);
  if (multi_count > 0) {
    rep.m_si = multi_sum / static_cast<double>(multi_count);
    rep.m_si_defined = true;
  }
  rep.trf = trf_sum / static_cast<double>(records.size());
  return rep;
}

}  // namespace remixsep
