#include "remixsep/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "remixsep/hungarian.hpp"
#include "remixsep/parallel.hpp"

namespace remixsep {

namespace {

constexpr double kLn10 = 2.302585092994045684;

double db10(double ratio) { return 10.0 * std::log10(ratio); }

bool is_all_zero(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] != 0.0) return false;
  return true;
}

}  // namespace

double snr_loss(const double* y, const double* y_hat, std::size_t n, double tau) {
  const double num = energy(y, n);
  if (num <= 0.0)
    throw std::invalid_argument("snr_loss: all-zero reference; route via zero_ref_snr_loss");
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = y[i] - y_hat[i];
    err += d * d;
  }
  return -db10(num / (err + tau * num));
}

double snr_loss(const Waveform& y, const Waveform& y_hat, double tau) {
  if (y.length() != y_hat.length()) throw std::invalid_argument("snr_loss: length mismatch");
  return snr_loss(y.samples.data(), y_hat.samples.data(), y.length(), tau);
}

void snr_loss_grad(const double* y, const double* y_hat, std::size_t n, double tau,
                   double weight, double* grad) {
  const double num = energy(y, n);
  if (num <= 0.0) throw std::invalid_argument("snr_loss_grad: all-zero reference");
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = y[i] - y_hat[i];
    err += d * d;
  }
  const double den = err + tau * num;
  const double c = weight * 20.0 / (kLn10 * den);
  for (std::size_t i = 0; i < n; ++i) grad[i] += c * (y_hat[i] - y[i]);
}

double zero_ref_snr_loss(const double* y, const double* y_hat, std::size_t n,
                         double mixture_energy, const LossConfig& cfg) {
  if (energy(y, n) > 0.0) return snr_loss(y, y_hat, n, cfg.tau);
  if (cfg.zero_ref_mode == ZeroRefMode::skip) return 0.0;
  const double floor = std::max(cfg.tau * mixture_energy, 1e-30);
  return db10(energy(y_hat, n) + floor) - db10(floor);
}

void zero_ref_snr_loss_grad(const double* y, const double* y_hat, std::size_t n,
                            double mixture_energy, const LossConfig& cfg, double weight,
                            double* grad) {
  if (energy(y, n) > 0.0) {
    snr_loss_grad(y, y_hat, n, cfg.tau, weight, grad);
    return;
  }
  if (cfg.zero_ref_mode == ZeroRefMode::skip) return;
  const double floor = std::max(cfg.tau * mixture_energy, 1e-30);
  const double den = energy(y_hat, n) + floor;
  const double c = weight * 20.0 / (kLn10 * den);
  for (std::size_t i = 0; i < n; ++i) grad[i] += c * y_hat[i];
}

double sparsity_regularizer(const ConstRow& estimates, const double* mixture, double weight) {
  const double mix_norm = std::sqrt(energy(mixture, estimates.length));
  if (mix_norm <= 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t n = 0; n < estimates.channels; ++n)
    sum += std::sqrt(energy(estimates.chan(n), estimates.length));
  return weight * sum / mix_norm;
}

void sparsity_regularizer_grad(const ConstRow& estimates, const double* mixture, double weight,
                               double* grad_row) {
  const double mix_norm = std::sqrt(energy(mixture, estimates.length));
  if (mix_norm <= 0.0) return;
  for (std::size_t n = 0; n < estimates.channels; ++n) {
    const double* s = estimates.chan(n);
    const double nrm = std::sqrt(energy(s, estimates.length));
    if (nrm <= 0.0) continue;
    const double c = weight / (mix_norm * nrm);
    double* g = grad_row + n * estimates.length;
    for (std::size_t t = 0; t < estimates.length; ++t) g[t] += c * s[t];
  }
}

AssignmentResult mixit_loss(const WaveBatch& mixtures, const ConstRow& estimates,
                            const LossConfig& cfg, MixitSolver solver) {
  const std::size_t bp = mixtures.batch;
  const std::size_t N = estimates.channels;
  const std::size_t T = estimates.length;
  if (bp < 2) throw std::invalid_argument("mixit_loss: need at least two mixtures");
  if (mixtures.length != T) throw std::invalid_argument("mixit_loss: length mismatch");

  std::vector<double> ex(bp), xs(bp * N), ss(N * N);
  for (std::size_t b = 0; b < bp; ++b) {
    ex[b] = energy(mixtures.item(b), T);
    if (ex[b] <= 0.0) throw std::invalid_argument("mixit_loss: all-zero mixture reference");
    for (std::size_t n = 0; n < N; ++n) xs[b * N + n] = dot(mixtures.item(b), estimates.chan(n), T);
  }
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m <= n; ++m)
      ss[n * N + m] = ss[m * N + n] = dot(estimates.chan(n), estimates.chan(m), T);

  auto assignment_loss = [&](const std::vector<std::size_t>& a, std::vector<double>& per_target) {
    per_target.assign(bp, 0.0);
    double total = 0.0;
    for (std::size_t b = 0; b < bp; ++b) {
      double cross = 0.0, self = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        if (a[n] != b) continue;
        cross += xs[b * N + n];
        for (std::size_t m = 0; m < N; ++m)
          if (a[m] == b) self += ss[n * N + m];
      }
      const double err = std::max(ex[b] - 2.0 * cross + self, 0.0);
      per_target[b] = -db10(ex[b] / (err + cfg.tau * ex[b]));
      total += per_target[b];
    }
    return total;
  };

  AssignmentResult best;
  best.loss_value = std::numeric_limits<double>::infinity();
  std::vector<double> per_target;

  if (solver == MixitSolver::exhaustive) {
    if (N > 14)
      throw std::invalid_argument(
          "mixit_loss: exhaustive search refused for N > 14; use the greedy solver");
    std::vector<std::size_t> a(N, 0);
    while (true) {
      const double total = assignment_loss(a, per_target);
      if (total < best.loss_value) {
        best.loss_value = total;
        best.mixing = a;
        best.per_target_losses = per_target;
      }
      std::size_t k = 0;
      while (k < N && ++a[k] == bp) a[k++] = 0;
      if (k == N) break;
    }
  } else {
    // per-source greedy: place estimates in decreasing-energy order on the
    // target that minimizes the running total
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return ss[i * N + i] > ss[j * N + j]; });
    std::vector<std::size_t> a(N, 0);
    std::vector<char> placed(N, 0);
    for (std::size_t oi = 0; oi < N; ++oi) {
      const std::size_t n = order[oi];
      placed[n] = 1;
      double best_total = std::numeric_limits<double>::infinity();
      std::size_t best_b = 0;
      for (std::size_t b = 0; b < bp; ++b) {
        a[n] = b;
        // evaluate using only placed estimates
        std::vector<std::size_t> partial(N, bp + 1);
        for (std::size_t m = 0; m < N; ++m)
          if (placed[m]) partial[m] = a[m];
        for (std::size_t m = 0; m < N; ++m)
          if (partial[m] == bp + 1) partial[m] = bp;  // out of range: unassigned
        // reuse assignment_loss by treating unassigned as "no target"
        double total = 0.0;
        for (std::size_t b2 = 0; b2 < bp; ++b2) {
          double cross = 0.0, self = 0.0;
          for (std::size_t m = 0; m < N; ++m) {
            if (partial[m] != b2) continue;
            cross += xs[b2 * N + m];
            for (std::size_t q = 0; q < N; ++q)
              if (partial[q] == b2) self += ss[m * N + q];
          }
          const double err = std::max(ex[b2] - 2.0 * cross + self, 0.0);
          total += -db10(ex[b2] / (err + cfg.tau * ex[b2]));
        }
        if (total < best_total) {
          best_total = total;
          best_b = b;
        }
      }
      a[n] = best_b;
    }
    best.loss_value = assignment_loss(a, per_target);
    best.mixing = a;
    best.per_target_losses = per_target;
  }
  return best;
}

void mixit_backward(const WaveBatch& mixtures, const ConstRow& estimates,
                    const AssignmentResult& r, const LossConfig& cfg, double weight,
                    double* grad_row) {
  const std::size_t bp = mixtures.batch;
  const std::size_t N = estimates.channels;
  const std::size_t T = estimates.length;
  std::vector<double> sum(T);
  std::vector<double> g(T);
  for (std::size_t b = 0; b < bp; ++b) {
    std::fill(sum.begin(), sum.end(), 0.0);
    bool any = false;
    for (std::size_t n = 0; n < N; ++n) {
      if (r.mixing[n] != b) continue;
      any = true;
      const double* s = estimates.chan(n);
      for (std::size_t t = 0; t < T; ++t) sum[t] += s[t];
    }
    std::fill(g.begin(), g.end(), 0.0);
    snr_loss_grad(mixtures.item(b), sum.data(), T, cfg.tau, weight, g.data());
    if (!any) continue;
    for (std::size_t n = 0; n < N; ++n) {
      if (r.mixing[n] != b) continue;
      double* gn = grad_row + n * T;
      for (std::size_t t = 0; t < T; ++t) gn[t] += g[t];
    }
  }
}

std::pair<std::vector<std::size_t>, double> pit_assign_exhaustive(const std::vector<double>& cost,
                                                                  std::size_t n) {
  std::vector<std::size_t> perm(n), best(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best_total = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += cost[i * n + perm[i]];
    if (total < best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best, best_total};
}

std::pair<std::vector<std::size_t>, double> pit_assign_hungarian(const std::vector<double>& cost,
                                                                 std::size_t n) {
  std::vector<std::size_t> perm;
  const double total = hungarian(cost, n, perm);
  return {perm, total};
}

std::pair<std::vector<std::size_t>, double> pit_assign(const std::vector<double>& cost,
                                                       std::size_t n) {
  return n <= 5 ? pit_assign_exhaustive(cost, n) : pit_assign_hungarian(cost, n);
}

AssignmentResult mixpit_loss(const WaveBatch& mixtures, const ConstRow& estimates,
                             const LossConfig& cfg) {
  const std::size_t N = estimates.channels;
  if (mixtures.batch != N)
    throw std::invalid_argument("mixpit_loss: needs as many estimates as mixtures (B' == N)");
  if (mixtures.length != estimates.length) throw std::invalid_argument("mixpit_loss: length mismatch");
  std::vector<double> cost(N * N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j)
      cost[i * N + j] = snr_loss(mixtures.item(i), estimates.chan(j), estimates.length, cfg.tau);
  auto [perm, total] = pit_assign(cost, N);
  AssignmentResult r;
  r.permutation = perm;
  r.loss_value = total / static_cast<double>(N);
  r.per_target_losses.resize(N);
  for (std::size_t i = 0; i < N; ++i) r.per_target_losses[i] = cost[i * N + perm[i]];
  return r;
}

void mixpit_backward(const WaveBatch& mixtures, const ConstRow& estimates,
                     const AssignmentResult& r, const LossConfig& cfg, double weight,
                     double* grad_row) {
  const std::size_t N = estimates.channels;
  const double w = weight / static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t j = r.permutation[i];
    snr_loss_grad(mixtures.item(i), estimates.chan(j), estimates.length, cfg.tau, w,
                  grad_row + j * estimates.length);
  }
}

namespace {

struct PairwiseLoss {
  const LossConfig& cfg;
  bool zero_ref;
  double mixture_energy;

  double value(const double* ref, const double* est, std::size_t T, bool ref_zero) const {
    if (!ref_zero) return snr_loss(ref, est, T, cfg.tau);
    if (!zero_ref)
      throw std::invalid_argument("pit: all-zero reference without zero_ref handling");
    return zero_ref_snr_loss(ref, est, T, mixture_energy, cfg);
  }
};

}  // namespace

PitBatchResult remixit_loss(const SourceStack& teacher_shuffled, const SourceStack& student,
                            const LossConfig& cfg, bool zero_ref,
                            const std::vector<double>* mixture_energies,
                            const std::vector<char>* skip_items) {
  if (teacher_shuffled.batch != student.batch || teacher_shuffled.channels != student.channels ||
      teacher_shuffled.length != student.length)
    throw std::invalid_argument("remixit_loss: shape mismatch");
  const std::size_t B = student.batch, N = student.channels, T = student.length;

  PitBatchResult r;
  r.perms.assign(B, {});
  r.per_item_losses.assign(B, 0.0);
  r.item_used.assign(B, 1);
  r.aligned = SourceStack(B, N, T, student.sample_rate);

  parallel_for(B, ExecPolicy::parallel, [&](std::size_t b) {
    if (skip_items && (*skip_items)[b]) {
      r.item_used[b] = 0;
      return;
    }
    PairwiseLoss pl{cfg, zero_ref, mixture_energies ? (*mixture_energies)[b] : 0.0};
    std::vector<char> ref_zero(N, 0);
    std::size_t active = 0;
    for (std::size_t i = 0; i < N; ++i) {
      ref_zero[i] = is_all_zero(teacher_shuffled.chan(b, i), T) ? 1 : 0;
      if (!ref_zero[i]) ++active;
    }
    if (active == 0) {
      r.item_used[b] = 0;
      return;
    }
    std::vector<double> cost(N * N);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j)
        cost[i * N + j] = pl.value(teacher_shuffled.chan(b, i), student.chan(b, j), T, ref_zero[i]);
    auto [perm, total] = pit_assign(cost, N);
    r.perms[b] = perm;
    const std::size_t denom =
        (zero_ref && cfg.zero_ref_mode == ZeroRefMode::skip) ? active : N;
    r.per_item_losses[b] = total / static_cast<double>(denom);
    for (std::size_t i = 0; i < N; ++i)
      std::copy_n(student.chan(b, perm[i]), T, r.aligned.chan(b, i));
  });

  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < B; ++b) {
    if (!r.item_used[b]) continue;
    sum += r.per_item_losses[b];
    ++used;
  }
  r.loss = used > 0 ? sum / static_cast<double>(used) : 0.0;
  return r;
}

void remixit_backward(const SourceStack& teacher_shuffled, const SourceStack& student,
                      const PitBatchResult& r, const LossConfig& cfg, bool zero_ref,
                      const std::vector<double>* mixture_energies, double weight,
                      SourceStack& grad_student) {
  const std::size_t B = student.batch, N = student.channels, T = student.length;
  std::size_t used = 0;
  for (std::size_t b = 0; b < B; ++b) used += r.item_used[b] ? 1 : 0;
  if (used == 0) return;

  parallel_for(B, ExecPolicy::parallel, [&](std::size_t b) {
    if (!r.item_used[b]) return;
    std::vector<char> ref_zero(N, 0);
    std::size_t active = 0;
    for (std::size_t i = 0; i < N; ++i) {
      ref_zero[i] = is_all_zero(teacher_shuffled.chan(b, i), T) ? 1 : 0;
      if (!ref_zero[i]) ++active;
    }
    const std::size_t denom =
        (zero_ref && cfg.zero_ref_mode == ZeroRefMode::skip) ? active : N;
    const double w = weight / (static_cast<double>(used) * static_cast<double>(denom));
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t j = r.perms[b][i];
      const double* ref = teacher_shuffled.chan(b, i);
      const double* est = student.chan(b, j);
      double* g = grad_student.chan(b, j);
      if (!ref_zero[i])
        snr_loss_grad(ref, est, T, cfg.tau, w, g);
      else
        zero_ref_snr_loss_grad(ref, est, T, mixture_energies ? (*mixture_energies)[b] : 0.0, cfg,
                               w, g);
    }
  });
}

SelfRemixResult self_remixing_loss(const SourceStack& student,
                                   const SourceStack& teacher_shuffled, const RemixPlan& plan,
                                   const WaveBatch& initial_mixtures, const LossConfig& cfg,
                                   bool zero_ref, const std::vector<double>* mixture_energies,
                                   const std::vector<char>* skip_items) {
  const std::size_t B = student.batch, N = student.channels, T = student.length;
  if (initial_mixtures.batch != B || initial_mixtures.length != T)
    throw std::invalid_argument("self_remixing_loss: mixture shape mismatch");

  SelfRemixResult r;
  r.alignment = remixit_loss(teacher_shuffled, student, cfg, zero_ref, mixture_energies,
                             skip_items);
  const SourceStack restored = unshuffle(r.alignment.aligned, plan);
  r.reconstruction = WaveBatch(B, T, initial_mixtures.sample_rate);
  r.item_used.assign(B, 1);
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < B; ++b) {
    double* recon = r.reconstruction.item(b);
    for (std::size_t n = 0; n < N; ++n) {
      const double* s = restored.chan(b, n);
      for (std::size_t t = 0; t < T; ++t) recon[t] += s[t];
    }
    if (!r.alignment.item_used[b] || (skip_items && (*skip_items)[b]) ||
        is_all_zero(initial_mixtures.item(b), T)) {
      r.item_used[b] = 0;
      continue;
    }
    sum += snr_loss(initial_mixtures.item(b), recon, T, cfg.tau);
    ++used;
  }
  r.loss = used > 0 ? sum / static_cast<double>(used) : 0.0;
  return r;
}

void self_remixing_backward(const SourceStack& student, const SelfRemixResult& r,
                            const RemixPlan& plan, const WaveBatch& initial_mixtures,
                            const LossConfig& cfg, double weight, SourceStack& grad_student) {
  const std::size_t B = student.batch, N = student.channels, T = student.length;
  std::size_t used = 0;
  for (std::size_t b = 0; b < B; ++b) used += r.item_used[b] ? 1 : 0;
  if (used == 0) return;
  const double w = weight / static_cast<double>(used);

  SourceStack grad_restored(B, N, T, student.sample_rate);
  std::vector<double> g(T);
  for (std::size_t b = 0; b < B; ++b) {
    if (!r.item_used[b]) continue;
    std::fill(g.begin(), g.end(), 0.0);
    snr_loss_grad(initial_mixtures.item(b), r.reconstruction.item(b), T, cfg.tau, w, g.data());
    for (std::size_t n = 0; n < N; ++n) std::copy_n(g.data(), T, grad_restored.chan(b, n));
  }
  const SourceStack grad_aligned = unshuffle_adjoint(grad_restored, plan);
  for (std::size_t b = 0; b < B; ++b) {
    if (!r.item_used[b]) continue;
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t j = r.alignment.perms[b][i];
      const double* ga = grad_aligned.chan(b, i);
      double* gs = grad_student.chan(b, j);
      for (std::size_t t = 0; t < T; ++t) gs[t] += ga[t];
    }
  }
}

}  // namespace remixsep
