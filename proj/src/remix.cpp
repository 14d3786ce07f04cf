#include "remixsep/remix.hpp"

#include <algorithm>
#include <stdexcept>

namespace remixsep {

namespace {

bool rows_distinct(const std::vector<std::vector<std::size_t>>& perms, std::size_t batch) {
  const std::size_t channels = perms.size();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t n = 1; n < channels; ++n)
      for (std::size_t m = 0; m < n; ++m)
        if (perms[n][b] == perms[m][b]) return false;
  }
  return true;
}

// Row-by-row Latin rectangle: each new row is a permutation avoiding the
// values already used in each column. Positions are filled in random order
// with backtracking; a system of distinct representatives always exists while
// rows <= batch.
bool build_row_greedy(std::vector<std::vector<std::size_t>>& perms, std::size_t row,
                      std::size_t batch, Rng& rng, int& budget) {
  std::vector<std::size_t> order = rng.permutation(batch);
  std::vector<std::size_t> value(batch, batch);
  std::vector<char> used(batch, 0);

  std::vector<std::vector<std::size_t>> options(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t v = 0; v < batch; ++v) {
      bool clash = false;
      for (std::size_t r = 0; r < row; ++r)
        if (perms[r][b] == v) { clash = true; break; }
      if (!clash) options[b].push_back(v);
    }
    rng.shuffle(options[b]);
  }

  std::vector<std::size_t> cursor(batch, 0);
  std::size_t i = 0;
  while (i < batch) {
    if (--budget < 0) return false;
    const std::size_t b = order[i];
    bool placed = false;
    while (cursor[i] < options[b].size()) {
      const std::size_t v = options[b][cursor[i]++];
      if (!used[v]) {
        value[b] = v;
        used[v] = 1;
        placed = true;
        break;
      }
    }
    if (placed) {
      ++i;
    } else {
      cursor[i] = 0;
      if (i == 0) return false;
      --i;
      const std::size_t pb = order[i];
      used[value[pb]] = 0;
      value[pb] = batch;
    }
  }
  perms[row] = value;
  return true;
}

// Cyclic rectangle: row n reads a random base permutation at a distinct
// rotation, so columns are distinct by construction. Guaranteed fallback.
void build_cyclic(std::vector<std::vector<std::size_t>>& perms, std::size_t batch,
                  std::size_t channels, Rng& rng) {
  const auto base = rng.permutation(batch);
  auto rot = rng.permutation(batch);
  rot.resize(channels);
  for (std::size_t n = 0; n < channels; ++n)
    for (std::size_t b = 0; b < batch; ++b) perms[n][b] = base[(b + rot[n]) % batch];
}

}  // namespace

RemixPlan sample_plan(std::size_t batch, std::size_t channels, bool avoid_same_mixture,
                      bool use_channel_shuffle, Rng& rng) {
  if (batch == 0 || channels == 0) throw std::invalid_argument("sample_plan: empty plan");
  if (avoid_same_mixture && batch < channels)
    throw std::invalid_argument(
        "sample_plan: same-mixture avoidance needs batch >= channels (a row of " +
        std::to_string(channels) + " distinct origins cannot be drawn from " +
        std::to_string(batch) + " items)");

  RemixPlan plan;
  plan.batch = batch;
  plan.channels = channels;
  plan.avoid_same_mixture = avoid_same_mixture;
  plan.batch_perms.assign(channels, std::vector<std::size_t>(batch));

  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    for (std::size_t n = 0; n < channels; ++n) plan.batch_perms[n] = rng.permutation(batch);
    ok = !avoid_same_mixture || rows_distinct(plan.batch_perms, batch);
  }
  if (!ok) {
    plan.batch_perms[0] = rng.permutation(batch);
    ok = true;
    for (std::size_t n = 1; n < channels && ok; ++n) {
      int budget = static_cast<int>(batch) * 64;
      ok = build_row_greedy(plan.batch_perms, n, batch, rng, budget);
    }
    if (!ok) build_cyclic(plan.batch_perms, batch, channels, rng);
  }

  if (use_channel_shuffle) {
    plan.channel_perms.resize(batch);
    for (std::size_t b = 0; b < batch; ++b) plan.channel_perms[b] = rng.permutation(channels);
  }
  return plan;
}

bool plan_rows_distinct(const RemixPlan& plan) {
  return rows_distinct(plan.batch_perms, plan.batch);
}

SourceStack channel_shuffle(const SourceStack& sources, const RemixPlan& plan) {
  if (plan.channel_perms.empty())
    throw std::invalid_argument("channel_shuffle: plan has no channel permutations");
  if (plan.batch != sources.batch || plan.channels != sources.channels)
    throw std::invalid_argument("channel_shuffle: shape mismatch");
  SourceStack out(sources.batch, sources.channels, sources.length, sources.sample_rate);
  for (std::size_t b = 0; b < sources.batch; ++b)
    for (std::size_t n = 0; n < sources.channels; ++n)
      std::copy_n(sources.chan(b, plan.channel_perms[b][n]), sources.length, out.chan(b, n));
  return out;
}

PseudoBatch remix_pseudo_mixtures(const SourceStack& sources, const RemixPlan& plan) {
  if (plan.batch != sources.batch || plan.channels != sources.channels)
    throw std::invalid_argument("remix: shape mismatch");
  const SourceStack* stage = &sources;
  SourceStack cs;
  if (plan.has_channel_shuffle()) {
    cs = channel_shuffle(sources, plan);
    stage = &cs;
  }

  PseudoBatch out;
  out.plan = plan;
  out.shuffled_sources = SourceStack(sources.batch, sources.channels, sources.length,
                                     sources.sample_rate);
  out.mixtures = WaveBatch(sources.batch, sources.length, sources.sample_rate);
  for (std::size_t n = 0; n < sources.channels; ++n) {
    for (std::size_t b = 0; b < sources.batch; ++b) {
      const double* src = stage->chan(plan.batch_perms[n][b], n);
      double* dst = out.shuffled_sources.chan(b, n);
      double* mix = out.mixtures.item(b);
      for (std::size_t t = 0; t < sources.length; ++t) {
        dst[t] = src[t];
        mix[t] += src[t];
      }
    }
  }
  return out;
}

SourceStack unshuffle(const SourceStack& aligned_student, const RemixPlan& plan) {
  if (plan.batch != aligned_student.batch || plan.channels != aligned_student.channels)
    throw std::invalid_argument("unshuffle: shape mismatch");
  const std::size_t B = plan.batch, N = plan.channels, T = aligned_student.length;

  // invert the batch shuffle: the source that was read from item b goes back
  SourceStack t1(B, N, T, aligned_student.sample_rate);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(aligned_student.chan(b, n), T, t1.chan(plan.batch_perms[n][b], n));

  if (!plan.has_channel_shuffle()) return t1;

  SourceStack out(B, N, T, aligned_student.sample_rate);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n)
      std::copy_n(t1.chan(b, n), T, out.chan(b, plan.channel_perms[b][n]));
  return out;
}

SourceStack unshuffle_adjoint(const SourceStack& grad, const RemixPlan& plan) {
  const std::size_t B = plan.batch, N = plan.channels, T = grad.length;
  const SourceStack* stage = &grad;
  SourceStack cs;
  if (plan.has_channel_shuffle()) {
    cs = SourceStack(B, N, T, grad.sample_rate);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t n = 0; n < N; ++n)
        std::copy_n(grad.chan(b, plan.channel_perms[b][n]), T, cs.chan(b, n));
    stage = &cs;
  }
  SourceStack out(B, N, T, grad.sample_rate);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(stage->chan(plan.batch_perms[n][b], n), T, out.chan(b, n));
  return out;
}

std::vector<std::int64_t> serialize_plan(const RemixPlan& plan) {
  std::vector<std::int64_t> rec;
  rec.push_back(static_cast<std::int64_t>(plan.batch));
  rec.push_back(static_cast<std::int64_t>(plan.channels));
  rec.push_back(plan.avoid_same_mixture ? 1 : 0);
  rec.push_back(plan.has_channel_shuffle() ? 1 : 0);
  for (const auto& p : plan.batch_perms)
    for (auto v : p) rec.push_back(static_cast<std::int64_t>(v));
  for (const auto& p : plan.channel_perms)
    for (auto v : p) rec.push_back(static_cast<std::int64_t>(v));
  return rec;
}

RemixPlan deserialize_plan(const std::vector<std::int64_t>& rec) {
  if (rec.size() < 4) throw std::invalid_argument("plan record too short");
  RemixPlan plan;
  plan.batch = static_cast<std::size_t>(rec[0]);
  plan.channels = static_cast<std::size_t>(rec[1]);
  plan.avoid_same_mixture = rec[2] != 0;
  const bool cs = rec[3] != 0;
  std::size_t pos = 4;
  const std::size_t need = plan.channels * plan.batch * (cs ? 2 : 1);
  if (rec.size() != 4 + need) throw std::invalid_argument("plan record size mismatch");
  plan.batch_perms.assign(plan.channels, std::vector<std::size_t>(plan.batch));
  for (auto& p : plan.batch_perms)
    for (auto& v : p) v = static_cast<std::size_t>(rec[pos++]);
  if (cs) {
    plan.channel_perms.assign(plan.batch, std::vector<std::size_t>(plan.channels));
    for (auto& p : plan.channel_perms)
      for (auto& v : p) v = static_cast<std::size_t>(rec[pos++]);
  }
  return plan;
}

}  // namespace remixsep
