#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "remixsep/metrics.hpp"

using namespace remixsep;

TEST_CASE("sisdr closed forms") {
  SUBCASE("scaled copy hits the cap") {
    std::vector<double> y{0.3, -0.7, 1.1, 0.2};
    std::vector<double> e(y);
    for (auto& v : e) v *= 3.0;
    CHECK(sisdr(y.data(), e.data(), 4) == doctest::Approx(kSisdrCapDb));
  }
  SUBCASE("orthogonal estimate hits the lower cap") {
    std::vector<double> y{1.0, 0.0};
    std::vector<double> e{0.0, 1.0};
    CHECK(sisdr(y.data(), e.data(), 2) == doctest::Approx(-kSisdrCapDb));
  }
  SUBCASE("unit example") {
    std::vector<double> y{1.0, 0.0};
    std::vector<double> e{1.0, 1.0};
    CHECK(sisdr(y.data(), e.data(), 2) == doctest::Approx(0.0));
  }
  SUBCASE("all-zero reference rejected") {
    std::vector<double> y{0.0, 0.0};
    std::vector<double> e{1.0, 1.0};
    CHECK_THROWS_AS(sisdr(y.data(), e.data(), 2), std::invalid_argument);
  }
}

TEST_CASE("sisdr is scale invariant to 1e-9 dB") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Waveform y = oracle::random_wave(rng, 256);
    Waveform e = oracle::random_wave(rng, 256);
    const double base = sisdr(y, e);
    for (double c : {0.01, 0.5, 7.0, 1234.5}) {
      Waveform scaled = e;
      for (auto& v : scaled.samples) v *= c;
      CHECK(std::abs(sisdr(y, scaled) - base) < 1e-9);
    }
  }
}

TEST_CASE("sisdr agrees with an independent computation") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Waveform y = oracle::random_wave(rng, 200);
    Waveform e = oracle::random_wave(rng, 200);
    CHECK(sisdr(y, e) ==
          doctest::Approx(oracle::sisdr_direct(y.samples.data(), e.samples.data(), 200))
              .epsilon(1e-12));
  }
}

namespace {

SourceStack stack_from(const std::vector<std::vector<double>>& rows) {
  SourceStack s(1, rows.size(), rows[0].size(), 8000);
  for (std::size_t n = 0; n < rows.size(); ++n)
    std::copy(rows[n].begin(), rows[n].end(), s.chan(0, n));
  return s;
}

}  // namespace

TEST_CASE("evaluate_example") {
  Rng rng(3);
  const std::size_t T = 256;
  SUBCASE("exact reference in some channel gives the cap") {
    Waveform ref = oracle::random_wave(rng, T);
    SourceStack est(1, 3, T, 8000);
    std::copy_n(ref.samples.data(), T, est.chan(0, 2));
    for (std::size_t t = 0; t < T; ++t) {
      est.chan(0, 0)[t] = rng.normal() * 0.1;
      est.chan(0, 1)[t] = rng.normal() * 0.1;
    }
    Waveform mix = ref;
    for (std::size_t t = 0; t < T; ++t) mix.samples[t] += est.chan(0, 0)[t];
    const EvalRecord rec = evaluate_example("x", {ref.samples.data()}, T, row(est, 0),
                                            mix.samples.data());
    CHECK(rec.per_source_sisdr[0] == doctest::Approx(kSisdrCapDb));
    CHECK(rec.sisdri[0] == doctest::Approx(kSisdrCapDb - rec.mixture_sisdr[0]));
  }
  SUBCASE("permuted references are recovered at the cap") {
    std::vector<Waveform> refs;
    for (int k = 0; k < 3; ++k) refs.push_back(oracle::random_wave(rng, T));
    SourceStack est(1, 3, T, 8000);
    std::copy_n(refs[2].samples.data(), T, est.chan(0, 0));
    std::copy_n(refs[0].samples.data(), T, est.chan(0, 1));
    std::copy_n(refs[1].samples.data(), T, est.chan(0, 2));
    Waveform mix{std::vector<double>(T, 0.0), 8000};
    for (const auto& r : refs)
      for (std::size_t t = 0; t < T; ++t) mix.samples[t] += r.samples[t];
    const EvalRecord rec = evaluate_example(
        "x", {refs[0].samples.data(), refs[1].samples.data(), refs[2].samples.data()}, T,
        row(est, 0), mix.samples.data());
    for (double v : rec.per_source_sisdr) CHECK(v == doctest::Approx(kSisdrCapDb));
  }
  SUBCASE("matching equals the exhaustive maximum on random K=2, N=3 cases") {
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<Waveform> refs{oracle::random_wave(rng, T), oracle::random_wave(rng, T)};
      SourceStack est(1, 3, T, 8000);
      for (std::size_t n = 0; n < 3; ++n)
        std::copy_n(oracle::random_wave(rng, T).samples.data(), T, est.chan(0, n));
      const auto match =
          match_references({refs[0].samples.data(), refs[1].samples.data()}, row(est, 0), T);
      // independent exhaustive arrangement search
      double best = -1e18;
      std::vector<std::size_t> best_pair;
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
          if (a == b) continue;
          const double s = oracle::sisdr_direct(refs[0].samples.data(), est.chan(0, a), T) +
                           oracle::sisdr_direct(refs[1].samples.data(), est.chan(0, b), T);
          if (s > best) {
            best = s;
            best_pair = {a, b};
          }
        }
      CHECK(match == best_pair);
    }
  }
  SUBCASE("shuffling estimate channels leaves the record unchanged") {
    std::vector<Waveform> refs{oracle::random_wave(rng, T), oracle::random_wave(rng, T)};
    SourceStack est(1, 4, T, 8000);
    for (std::size_t n = 0; n < 4; ++n)
      std::copy_n(oracle::random_wave(rng, T).samples.data(), T, est.chan(0, n));
    Waveform mix{std::vector<double>(T, 0.0), 8000};
    for (const auto& r : refs)
      for (std::size_t t = 0; t < T; ++t) mix.samples[t] += r.samples[t];
    const std::vector<const double*> refp{refs[0].samples.data(), refs[1].samples.data()};
    const EvalRecord a = evaluate_example("x", refp, T, row(est, 0), mix.samples.data());
    SourceStack shuffled(1, 4, T, 8000);
    const std::vector<std::size_t> perm{3, 1, 0, 2};
    for (std::size_t n = 0; n < 4; ++n)
      std::copy_n(est.chan(0, perm[n]), T, shuffled.chan(0, n));
    const EvalRecord b = evaluate_example("x", refp, T, row(shuffled, 0), mix.samples.data());
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(a.per_source_sisdr[k] == doctest::Approx(b.per_source_sisdr[k]).epsilon(1e-12));
  }
  SUBCASE("more references than estimates is rejected") {
    Waveform r1 = oracle::random_wave(rng, T);
    Waveform r2 = oracle::random_wave(rng, T);
    SourceStack est = stack_from({std::vector<double>(T, 1.0)});
    CHECK_THROWS_AS(
        match_references({r1.samples.data(), r2.samples.data()}, row(est, 0), T),
        std::invalid_argument);
  }
}

namespace {
EvalRecord make_record(int k, std::vector<double> sisdr, std::vector<double> mix_sisdr) {
  EvalRecord r;
  r.example_id = "fixture";
  r.k_active = k;
  r.per_source_sisdr = std::move(sisdr);
  r.mixture_sisdr = std::move(mix_sisdr);
  for (std::size_t i = 0; i < r.per_source_sisdr.size(); ++i)
    r.sisdri.push_back(r.per_source_sisdr[i] - r.mixture_sisdr[i]);
  return r;
}
}  // namespace

TEST_CASE("aggregate") {
  SUBCASE("all single-source: MSi undefined and TRF == 1S") {
    std::vector<EvalRecord> recs{make_record(1, {12.0}, {100.0}),
                                 make_record(1, {18.0}, {100.0})};
    const AggregateReport rep = aggregate(recs);
    CHECK(rep.one_s_defined);
    CHECK(!rep.m_si_defined);
    CHECK(rep.one_s == doctest::Approx(15.0));
    CHECK(rep.trf == doctest::Approx(15.0));
  }
  SUBCASE("two k=2 examples average into 2Si == MSi") {
    std::vector<EvalRecord> recs{make_record(2, {12.0, 12.0}, {2.0, 2.0}),
                                 make_record(2, {21.0, 21.0}, {1.0, 1.0})};
    const AggregateReport rep = aggregate(recs);
    CHECK(rep.k_si.at(2) == doctest::Approx(15.0));
    CHECK(rep.m_si == doctest::Approx(15.0));
  }
  SUBCASE("mixed set: TRF blends absolute and improvement") {
    std::vector<EvalRecord> recs{make_record(1, {30.0}, {100.0}),
                                 make_record(2, {12.0, 12.0}, {2.0, 2.0})};
    const AggregateReport rep = aggregate(recs);
    CHECK(rep.trf == doctest::Approx(20.0));
  }
  SUBCASE("six-record fixture") {
    // hand-computed: 1S = (10+20)/2 = 15
    // 2Si: items (8,12)->10 and (5,7)->6 => 8 ; 3Si: (9,6,3)->6 ; 4Si: (4,2,6,8)->5
    // MSi = (10+6+6+5)/4 = 6.75 ; TRF = (10+20+10+6+6+5)/6 = 9.5
    std::vector<EvalRecord> recs{
        make_record(1, {10.0}, {100.0}),
        make_record(1, {20.0}, {100.0}),
        make_record(2, {18.0, 17.0}, {10.0, 5.0}),
        make_record(2, {6.0, 8.0}, {1.0, 1.0}),
        make_record(3, {10.0, 7.0, 4.0}, {1.0, 1.0, 1.0}),
        make_record(4, {5.0, 3.0, 7.0, 9.0}, {1.0, 1.0, 1.0, 1.0})};
    const AggregateReport rep = aggregate(recs);
    CHECK(rep.one_s == doctest::Approx(15.0));
    CHECK(rep.k_si.at(2) == doctest::Approx(8.0));
    CHECK(rep.k_si.at(3) == doctest::Approx(6.0));
    CHECK(rep.k_si.at(4) == doctest::Approx(5.0));
    CHECK(rep.m_si == doctest::Approx(6.75));
    CHECK(rep.trf == doctest::Approx(9.5));
    CHECK(rep.num_examples == 6);
  }
  SUBCASE("order of records does not matter") {
    std::vector<EvalRecord> recs{make_record(1, {30.0}, {100.0}),
                                 make_record(2, {12.0, 12.0}, {2.0, 2.0}),
                                 make_record(3, {9.0, 9.0, 9.0}, {3.0, 3.0, 3.0})};
    const AggregateReport a = aggregate(recs);
    std::reverse(recs.begin(), recs.end());
    const AggregateReport b = aggregate(recs);
    CHECK(a.trf == doctest::Approx(b.trf));
    CHECK(a.m_si == doctest::Approx(b.m_si));
  }
}
