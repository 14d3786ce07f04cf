#pragma once

#include <cstddef>
#include <vector>

#include "remixsep/remix.hpp"
#include "remixsep/signals.hpp"

namespace remixsep {

enum class ZeroRefMode { skip, soft_threshold };

struct LossConfig {
  double tau = 1e-3;              // SNR clamp threshold; floor is -10*log10(1/tau)
  double sparsity_weight = 0.0;
  ZeroRefMode zero_ref_mode = ZeroRefMode::soft_threshold;
};

// N x T view into one item of a stack.
struct ConstRow {
  const double* base = nullptr;
  std::size_t channels = 0;
  std::size_t length = 0;
  const double* chan(std::size_t n) const { return base + n * length; }
};
inline ConstRow row(const SourceStack& s, std::size_t b) {
  return ConstRow{s.chan(b, 0), s.channels, s.length};
}

struct AssignmentResult {
  // MixIT: mixing[n] = target mixture of estimate n (columns one-hot).
  std::vector<std::size_t> mixing;
  // PIT: permutation[n] = estimate channel matched to target channel n.
  std::vector<std::size_t> permutation;
  double loss_value = 0.0;                // MixIT: sum over targets; PIT: mean
  std::vector<double> per_target_losses;
};

// Negative thresholded SNR: -10*log10(|y|^2 / (|y-yhat|^2 + tau*|y|^2)).
double snr_loss(const double* y, const double* y_hat, std::size_t n, double tau);
double snr_loss(const Waveform& y, const Waveform& y_hat, double tau);
// Accumulates weight * dL/dy_hat into grad.
void snr_loss_grad(const double* y, const double* y_hat, std::size_t n, double tau,
                   double weight, double* grad);

// Handles silent references: soft_threshold penalizes estimate energy against
// tau * mixture_energy (zero when the estimate is zero); skip returns 0 and
// the pair is excluded from means by the caller.
double zero_ref_snr_loss(const double* y, const double* y_hat, std::size_t n,
                         double mixture_energy, const LossConfig& cfg);
void zero_ref_snr_loss_grad(const double* y, const double* y_hat, std::size_t n,
                            double mixture_energy, const LossConfig& cfg, double weight,
                            double* grad);

// weight * (sum_n |s_n|_2) / |mixture|_2; the mixture norm is a constant for
// the gradient. Zero iff all estimates are zero.
double sparsity_regularizer(const ConstRow& estimates, const double* mixture, double weight);
void sparsity_regularizer_grad(const ConstRow& estimates, const double* mixture, double weight,
                               double* grad_row);

enum class MixitSolver { exhaustive, greedy };

// Joint search over all B'^N one-hot-column mixing matrices (Gram-matrix
// incremental evaluation); the SNR loss does not decompose per estimate, so
// the joint search is the exact solver. N > 14 must opt into the greedy
// solver explicitly.
AssignmentResult mixit_loss(const WaveBatch& mixtures, const ConstRow& estimates,
                            const LossConfig& cfg, MixitSolver solver = MixitSolver::exhaustive);
void mixit_backward(const WaveBatch& mixtures, const ConstRow& estimates,
                    const AssignmentResult& r, const LossConfig& cfg, double weight,
                    double* grad_row);

// Permutation assignment on a row-major cost matrix: exhaustive for n <= 5,
// Hungarian above. Both routes exposed for cross-checks.
std::pair<std::vector<std::size_t>, double> pit_assign(const std::vector<double>& cost,
                                                       std::size_t n);
std::pair<std::vector<std::size_t>, double> pit_assign_exhaustive(const std::vector<double>& cost,
                                                                  std::size_t n);
std::pair<std::vector<std::size_t>, double> pit_assign_hungarian(const std::vector<double>& cost,
                                                                 std::size_t n);

// Permutation-invariant loss between the individual mixtures of one MoM group
// and the estimates; requires N == B'. loss_value is the per-target mean.
AssignmentResult mixpit_loss(const WaveBatch& mixtures, const ConstRow& estimates,
                             const LossConfig& cfg);
void mixpit_backward(const WaveBatch& mixtures, const ConstRow& estimates,
                     const AssignmentResult& r, const LossConfig& cfg, double weight,
                     double* grad_row);

struct PitBatchResult {
  double loss = 0.0;                           // mean over items (and channels)
  std::vector<std::vector<std::size_t>> perms; // per item: target ch -> student ch
  std::vector<double> per_item_losses;
  SourceStack aligned;                         // student reordered to target order
  std::vector<char> item_used;                 // items contributing to the mean
};

// Teacher-supervised permutation-invariant loss (per-item assignment).
// zero_ref=true routes silent reference channels through zero_ref_snr_loss
// with the per-item mixture energies; skip_items marks items excluded from
// the mean (all-zero pseudo-mixtures).
PitBatchResult remixit_loss(const SourceStack& teacher_shuffled, const SourceStack& student,
                            const LossConfig& cfg, bool zero_ref = false,
                            const std::vector<double>* mixture_energies = nullptr,
                            const std::vector<char>* skip_items = nullptr);
void remixit_backward(const SourceStack& teacher_shuffled, const SourceStack& student,
                      const PitBatchResult& r, const LossConfig& cfg, bool zero_ref,
                      const std::vector<double>* mixture_energies, double weight,
                      SourceStack& grad_student);

struct SelfRemixResult {
  double loss = 0.0;  // mean over items
  PitBatchResult alignment;
  WaveBatch reconstruction;
  std::vector<char> item_used;
};

// Aligns the student to the teacher order, un-shuffles, channel-sums, and
// scores the reconstruction against the initial mixtures.
SelfRemixResult self_remixing_loss(const SourceStack& student,
                                   const SourceStack& teacher_shuffled, const RemixPlan& plan,
                                   const WaveBatch& initial_mixtures, const LossConfig& cfg,
                                   bool zero_ref = false,
                                   const std::vector<double>* mixture_energies = nullptr,
                                   const std::vector<char>* skip_items = nullptr);
void self_remixing_backward(const SourceStack& student, const SelfRemixResult& r,
                            const RemixPlan& plan, const WaveBatch& initial_mixtures,
                            const LossConfig& cfg, double weight, SourceStack& grad_student);

}  // namespace remixsep
