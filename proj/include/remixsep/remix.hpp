#pragma once

#include <cstddef>
#include <vector>

#include "remixsep/rng.hpp"
#include "remixsep/signals.hpp"

namespace remixsep {

// One shuffle-remix-unshuffle round trip. batch_perms[n][b] is the origin item
// whose channel-n source lands at item b; channel_perms[b][n] is the origin
// channel placed at slot n of item b before the batch shuffle.
struct RemixPlan {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::vector<std::vector<std::size_t>> batch_perms;    // channels x batch
  std::vector<std::vector<std::size_t>> channel_perms;  // batch x channels, empty if unused
  bool avoid_same_mixture = false;

  bool has_channel_shuffle() const { return !channel_perms.empty(); }
  // origin item feeding pseudo-mixture b through channel n
  std::size_t origin(std::size_t b, std::size_t n) const { return batch_perms[n][b]; }
};

struct PseudoBatch {
  WaveBatch mixtures;            // channel sums of the shuffled stack
  SourceStack shuffled_sources;  // targets for the teacher-supervised loss
  RemixPlan plan;
};

// Uniform permutations per channel; with avoid_same_mixture every pseudo-mix
// receives sources from N distinct origin items (needs B >= N). Rejection
// sampling capped at 100 draws, then a greedy Latin-rectangle construction
// with backtracking, then a randomized cyclic rectangle as the last resort.
RemixPlan sample_plan(std::size_t batch, std::size_t channels, bool avoid_same_mixture,
                      bool use_channel_shuffle, Rng& rng);

bool plan_rows_distinct(const RemixPlan& plan);

SourceStack channel_shuffle(const SourceStack& sources, const RemixPlan& plan);
PseudoBatch remix_pseudo_mixtures(const SourceStack& sources, const RemixPlan& plan);

// Inverse batch perms then inverse channel perms; exact inverse of the
// shuffle ordering applied by remix_pseudo_mixtures.
SourceStack unshuffle(const SourceStack& aligned_student, const RemixPlan& plan);

// Adjoint of unshuffle for gradient propagation (the forward shuffle applied
// to a gradient stack).
SourceStack unshuffle_adjoint(const SourceStack& grad, const RemixPlan& plan);

// Compact integer-array record for debugging/replay.
std::vector<std::int64_t> serialize_plan(const RemixPlan& plan);
RemixPlan deserialize_plan(const std::vector<std::int64_t>& rec);

}  // namespace remixsep
