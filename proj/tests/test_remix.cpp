#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "remixsep/remix.hpp"

using namespace remixsep;

namespace {
SourceStack random_int_stack(Rng& rng, std::size_t B, std::size_t N, std::size_t T) {
  SourceStack s(B, N, T, 8000);
  for (auto& v : s.data) v = std::floor(rng.uniform(-16.0, 16.0));
  return s;
}
}  // namespace

TEST_CASE("constrained plans with B=2, N=2 always have distinct rows") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const RemixPlan plan = sample_plan(2, 2, true, false, rng);
    for (std::size_t b = 0; b < 2; ++b)
      CHECK(plan.batch_perms[0][b] != plan.batch_perms[1][b]);
  }
}

TEST_CASE("pigeonhole: B < N with the constraint is rejected") {
  Rng rng(2);
  CHECK_THROWS_AS(sample_plan(1, 2, true, false, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_plan(2, 3, true, true, rng), std::invalid_argument);
  CHECK_NOTHROW(sample_plan(1, 2, false, false, rng));  // unconstrained is fine
}

TEST_CASE("10000 constrained plans at B=8, N=3 have no duplicate-origin rows") {
  Rng rng(3);
  for (int trial = 0; trial < 10000; ++trial) {
    const RemixPlan plan = sample_plan(8, 3, true, trial % 2 == 0, rng);
    CHECK(plan_rows_distinct(plan));
    // every row of every channel permutation is a bijection
    for (const auto& p : plan.batch_perms) {
      std::set<std::size_t> seen(p.begin(), p.end());
      CHECK(seen.size() == 8);
    }
  }
}

TEST_CASE("plans are deterministic given the rng state") {
  Rng a(77), b(77);
  const RemixPlan pa = sample_plan(8, 3, true, true, a);
  const RemixPlan pb = sample_plan(8, 3, true, true, b);
  CHECK(pa.batch_perms == pb.batch_perms);
  CHECK(pa.channel_perms == pb.channel_perms);
}

TEST_CASE("channel_shuffle") {
  Rng rng(4);
  SourceStack s = random_int_stack(rng, 3, 2, 16);

  SUBCASE("identity permutations leave the stack unchanged") {
    RemixPlan plan;
    plan.batch = 3;
    plan.channels = 2;
    plan.batch_perms = {{0, 1, 2}, {0, 1, 2}};
    plan.channel_perms = {{0, 1}, {0, 1}, {0, 1}};
    CHECK(channel_shuffle(s, plan).data == s.data);
  }
  SUBCASE("swap exchanges the channels") {
    SourceStack one(1, 2, 4, 8000);
    for (std::size_t t = 0; t < 4; ++t) {
      one.chan(0, 0)[t] = 1.0 + t;
      one.chan(0, 1)[t] = 10.0 + t;
    }
    RemixPlan plan;
    plan.batch = 1;
    plan.channels = 2;
    plan.batch_perms = {{0}, {0}};
    plan.channel_perms = {{1, 0}};
    const SourceStack out = channel_shuffle(one, plan);
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(out.chan(0, 0)[t] == 10.0 + t);
      CHECK(out.chan(0, 1)[t] == 1.0 + t);
    }
  }
  SUBCASE("applying an involution twice restores the stack") {
    RemixPlan plan;
    plan.batch = 3;
    plan.channels = 2;
    plan.batch_perms = {{0, 1, 2}, {0, 1, 2}};
    plan.channel_perms = {{1, 0}, {0, 1}, {1, 0}};  // swaps are involutions
    const SourceStack once = channel_shuffle(s, plan);
    const SourceStack twice = channel_shuffle(once, plan);
    CHECK(twice.data == s.data);
  }
  SUBCASE("per-item multisets are preserved") {
    Rng prng(5);
    const RemixPlan plan = sample_plan(3, 2, false, true, prng);
    const SourceStack out = channel_shuffle(s, plan);
    for (std::size_t b = 0; b < 3; ++b) {
      std::multiset<std::vector<double>> before, after;
      for (std::size_t n = 0; n < 2; ++n) {
        before.insert(std::vector<double>(s.chan(b, n), s.chan(b, n) + 16));
        after.insert(std::vector<double>(out.chan(b, n), out.chan(b, n) + 16));
      }
      CHECK(before == after);
    }
  }
}

TEST_CASE("remix_pseudo_mixtures applies the plan and records targets") {
  SUBCASE("identity plans sum the channels in place") {
    Rng rng(6);
    SourceStack s = random_int_stack(rng, 2, 3, 8);
    RemixPlan plan;
    plan.batch = 2;
    plan.channels = 3;
    plan.batch_perms = {{0, 1}, {0, 1}, {0, 1}};
    const PseudoBatch pb = remix_pseudo_mixtures(s, plan);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t t = 0; t < 8; ++t) {
        double sum = 0.0;
        for (std::size_t n = 0; n < 3; ++n) sum += s.chan(b, n)[t];
        CHECK(pb.mixtures.item(b)[t] == sum);
      }
    CHECK(pb.shuffled_sources.data == s.data);
  }
  SUBCASE("explicit B=2, N=2 case with one swap") {
    SourceStack s(2, 2, 2, 8000);
    // s[b][n] = 100*b + 10*n + t
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t t = 0; t < 2; ++t) s.chan(b, n)[t] = 100.0 * b + 10.0 * n + t;
    RemixPlan plan;
    plan.batch = 2;
    plan.channels = 2;
    plan.batch_perms = {{0, 1}, {1, 0}};  // channel 0 identity, channel 1 swapped
    const PseudoBatch pb = remix_pseudo_mixtures(s, plan);
    for (std::size_t t = 0; t < 2; ++t) {
      CHECK(pb.mixtures.item(0)[t] == s.chan(0, 0)[t] + s.chan(1, 1)[t]);
      CHECK(pb.mixtures.item(1)[t] == s.chan(1, 0)[t] + s.chan(0, 1)[t]);
    }
  }
  SUBCASE("pseudo-mixtures equal the channel sums of the recorded targets") {
    Rng rng(7);
    SourceStack s = random_int_stack(rng, 6, 3, 32);
    const RemixPlan plan = sample_plan(6, 3, true, true, rng);
    const PseudoBatch pb = remix_pseudo_mixtures(s, plan);
    for (std::size_t b = 0; b < 6; ++b)
      for (std::size_t t = 0; t < 32; ++t) {
        double sum = 0.0;
        for (std::size_t n = 0; n < 3; ++n) sum += pb.shuffled_sources.chan(b, n)[t];
        CHECK(pb.mixtures.item(b)[t] == sum);
      }
  }
}

TEST_CASE("unshuffle inverts the shuffle bit-exactly") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t B = 3 + trial % 4;
    const std::size_t N = 2 + trial % 2;
    SourceStack s = random_int_stack(rng, B, N, 16);
    const bool cs = trial % 2 == 0;
    const RemixPlan plan = sample_plan(B, N, B >= N, cs, rng);
    const PseudoBatch pb = remix_pseudo_mixtures(s, plan);
    const SourceStack back = unshuffle(pb.shuffled_sources, plan);
    CHECK(back.data == s.data);
  }
}

TEST_CASE("identity plan unshuffle is the identity") {
  Rng rng(9);
  SourceStack s = random_int_stack(rng, 4, 2, 8);
  RemixPlan plan;
  plan.batch = 4;
  plan.channels = 2;
  plan.batch_perms = {{0, 1, 2, 3}, {0, 1, 2, 3}};
  CHECK(unshuffle(s, plan).data == s.data);
}

TEST_CASE("batch totals per channel are conserved") {
  Rng rng(10);
  SourceStack s = random_int_stack(rng, 5, 3, 16);
  const RemixPlan plan = sample_plan(5, 3, true, true, rng);
  const PseudoBatch pb = remix_pseudo_mixtures(s, plan);
  for (std::size_t t = 0; t < 16; ++t) {
    double orig = 0.0, remixed = 0.0;
    for (std::size_t b = 0; b < 5; ++b)
      for (std::size_t n = 0; n < 3; ++n) {
        orig += s.chan(b, n)[t];
        remixed += pb.shuffled_sources.chan(b, n)[t];
      }
    CHECK(orig == remixed);  // integer-valued: exact
  }
}

TEST_CASE("constraint soundness on the contribution matrix") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const RemixPlan plan = sample_plan(8, 3, true, trial % 2 == 0, rng);
    for (std::size_t b = 0; b < 8; ++b) {
      std::set<std::size_t> origins;
      for (std::size_t n = 0; n < 3; ++n) origins.insert(plan.origin(b, n));
      CHECK(origins.size() == 3);
    }
  }
}

TEST_CASE("plans serialize to a compact integer record and back") {
  Rng rng(12);
  const RemixPlan plan = sample_plan(6, 3, true, true, rng);
  const auto rec = serialize_plan(plan);
  const RemixPlan back = deserialize_plan(rec);
  CHECK(back.batch == plan.batch);
  CHECK(back.channels == plan.channels);
  CHECK(back.avoid_same_mixture == plan.avoid_same_mixture);
  CHECK(back.batch_perms == plan.batch_perms);
  CHECK(back.channel_perms == plan.channel_perms);
}
