#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "remixsep/signals.hpp"

using namespace remixsep;

namespace {
const StftParams kDefault{256, 256, 64};
}

TEST_CASE("all-zero waveform gives an all-zero spectrogram") {
  Waveform w{std::vector<double>(2048, 0.0), 8000};
  const Spectrogram s = stft(w, kDefault);
  CHECK(s.bins == 129);
  for (const auto& c : s.data) CHECK(std::abs(c) == 0.0);
}

TEST_CASE("bin-centered sinusoid concentrates energy around its bin") {
  // Hann analysis has exactly three nonzero taps at an integer bin: the
  // center carries 2/3 of the energy and k0 +- 1 carry 1/6 each.
  const int sr = 8000;
  const std::size_t k0 = 32;
  const double freq = static_cast<double>(k0) * sr / kDefault.fft_size;
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(4096);
  for (std::size_t t = 0; t < w.samples.size(); ++t)
    w.samples[t] = std::sin(2.0 * std::numbers::pi * freq * t / sr);
  const Spectrogram s = stft(w, kDefault);

  // oracle: naive DFT of the Hann-windowed frame content
  const auto win = oracle::hann_periodic(kDefault.win_size);
  const std::size_t check_frame = s.frames / 2;
  const std::size_t pad = kDefault.win_size / 2;
  std::vector<double> frame(kDefault.fft_size, 0.0);
  for (int i = 0; i < kDefault.win_size; ++i) {
    const long long t = static_cast<long long>(check_frame) * kDefault.hop -
                        static_cast<long long>(pad) + i;
    frame[i] = win[i] * w.samples[static_cast<std::size_t>(t)];
  }
  const auto ref = oracle::naive_dft(frame);
  for (std::size_t k = 0; k < s.bins; ++k)
    CHECK(std::abs(s.frame(check_frame)[k] - ref[k]) < 1e-8 * kDefault.fft_size);

  // frames fully inside the signal (not overlapping the mirror padding)
  const std::size_t first_inner = (pad + kDefault.hop - 1) / kDefault.hop;
  const std::size_t last_inner =
      (w.samples.size() + pad - kDefault.win_size) / kDefault.hop;
  for (std::size_t f = first_inner; f <= last_inner; ++f) {
    double total = 0.0, near = 0.0, peak = 0.0;
    for (std::size_t k = 0; k < s.bins; ++k) {
      const double e = std::norm(s.frame(f)[k]);
      total += e;
      if (k + 1 >= k0 && k <= k0 + 1) near += e;
      if (k == k0) peak = e;
    }
    CHECK(near / total >= 0.999);
    CHECK(peak / total >= 0.60);
  }
}

TEST_CASE("istft(stft(w)) reconstructs the waveform") {
  Rng rng(123);
  Waveform w = oracle::random_wave(rng, 4096);
  const Spectrogram s = stft(w, kDefault);
  const Waveform r = istft(s, w.length(), w.sample_rate);
  CHECK(oracle::rel_l2(w.samples, r.samples) < 1e-5);

  // against the direct overlap-add computation
  const auto direct = oracle::direct_ola_istft(s, w.length());
  CHECK(oracle::rel_l2(direct, r.samples) < 1e-9);
}

TEST_CASE("perfect reconstruction holds across lengths and windows") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    StftParams p;
    const int fft_choices[] = {64, 128, 256};
    p.fft_size = fft_choices[rng.uniform_int(0, 2)];
    p.win_size = p.fft_size;
    const int hop_div[] = {2, 4, 8};
    p.hop = p.win_size / hop_div[rng.uniform_int(0, 2)];
    const std::size_t T = static_cast<std::size_t>(p.win_size) +
                          static_cast<std::size_t>(rng.uniform_int(0, 1500));
    Waveform w = oracle::random_wave(rng, T);
    const Waveform r = istft(stft(w, p), T, w.sample_rate);
    CHECK(oracle::rel_l2(w.samples, r.samples) < 1e-5);
  }
}

TEST_CASE("zero spectrogram inverts to a zero waveform") {
  Spectrogram s;
  s.frames = 10;
  s.bins = 129;
  s.params = kDefault;
  s.data.assign(s.frames * s.bins, {0.0, 0.0});
  const Waveform w = istft(s, 512, 8000);
  for (double v : w.samples) CHECK(v == 0.0);
}

TEST_CASE("single-frame spectrogram matches the one-frame closed form") {
  Rng rng(99);
  Spectrogram s;
  s.frames = 1;
  s.bins = 129;
  s.params = kDefault;
  // Hermitian-consistent single frame: DFT of a real windowed signal
  const auto win = oracle::hann_periodic(kDefault.win_size);
  std::vector<double> frame(kDefault.fft_size, 0.0);
  for (int i = 0; i < kDefault.win_size; ++i) frame[i] = win[i] * rng.normal();
  const auto bins = oracle::naive_dft(frame);
  s.data.assign(bins.begin(), bins.end());

  const std::size_t out_len = kDefault.win_size / 2;  // the region the frame covers post-slice
  const Waveform w = istft(s, out_len, 8000);
  const auto direct = oracle::direct_ola_istft(s, out_len);
  for (std::size_t t = 0; t < out_len; ++t) CHECK(w.samples[t] == doctest::Approx(direct[t]).epsilon(1e-5));
}

TEST_CASE("stft is linear") {
  Rng rng(5);
  Waveform u = oracle::random_wave(rng, 2048);
  Waveform v = oracle::random_wave(rng, 2048);
  const double a = 1.7, b = -0.3;
  Waveform mix = u;
  for (std::size_t i = 0; i < mix.samples.size(); ++i)
    mix.samples[i] = a * u.samples[i] + b * v.samples[i];
  const Spectrogram su = stft(u, kDefault), sv = stft(v, kDefault), sm = stft(mix, kDefault);
  for (std::size_t i = 0; i < sm.data.size(); ++i)
    CHECK(std::abs(sm.data[i] - (a * su.data[i] + b * sv.data[i])) < 1e-6);
}

TEST_CASE("istft adjoint satisfies the dot-product identity") {
  Rng rng(17);
  StftParams p{64, 64, 16};
  const std::size_t T = 256;
  Waveform w = oracle::random_wave(rng, T);
  Spectrogram s = stft(w, p);
  // random spectrogram with Hermitian-consistent DC/Nyquist
  for (std::size_t f = 0; f < s.frames; ++f) {
    auto* fr = s.frame(f);
    for (std::size_t k = 0; k < s.bins; ++k) fr[k] = {rng.normal(), rng.normal()};
    fr[0] = {fr[0].real(), 0.0};
    fr[s.bins - 1] = {fr[s.bins - 1].real(), 0.0};
  }
  const Waveform y = istft(s, T, 8000);
  std::vector<double> g(T);
  for (auto& v : g) v = rng.normal();

  double lhs = 0.0;
  for (std::size_t t = 0; t < T; ++t) lhs += y.samples[t] * g[t];

  const Spectrogram adj = istft_adjoint(g.data(), T, s.frames, p);
  double rhs = 0.0;
  for (std::size_t i = 0; i < s.data.size(); ++i)
    rhs += s.data[i].real() * adj.data[i].real() + s.data[i].imag() * adj.data[i].imag();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("normalize_mixture examples") {
  SUBCASE("constant waveform is zeroed with the std floored") {
    Waveform w{{5.0, 5.0, 5.0, 5.0}, 8000};
    auto [out, np] = normalize_mixture(w);
    for (double v : out.samples) CHECK(v == 0.0);
    CHECK(np.mean == doctest::Approx(5.0));
    CHECK(np.std == doctest::Approx(1e-8));
    CHECK(np.degenerate);
  }
  SUBCASE("already normalized input is unchanged") {
    Waveform w{{1.0, -1.0, 1.0, -1.0}, 8000};
    auto [out, np] = normalize_mixture(w);
    CHECK(out.samples == w.samples);
    CHECK(np.mean == doctest::Approx(0.0));
    CHECK(np.std == doctest::Approx(1.0));
    CHECK(!np.degenerate);
  }
  SUBCASE("offset square wave") {
    Waveform w{{0.0, 2.0, 0.0, 2.0}, 8000};
    auto [out, np] = normalize_mixture(w);
    CHECK(out.samples == std::vector<double>{-1.0, 1.0, -1.0, 1.0});
    CHECK(np.mean == doctest::Approx(1.0));
    CHECK(np.std == doctest::Approx(1.0));
  }
  SUBCASE("moments of random input") {
    Rng rng(3);
    Waveform w = oracle::random_wave(rng, 977);
    for (auto& v : w.samples) v = 3.0 * v + 1.5;
    auto [out, np] = normalize_mixture(w);
    double mean = 0.0;
    for (double v : out.samples) mean += v;
    mean /= static_cast<double>(out.samples.size());
    double var = 0.0;
    for (double v : out.samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(out.samples.size());
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
  }
}

TEST_CASE("parameter validation") {
  Waveform w{std::vector<double>(100, 1.0), 8000};
  CHECK_THROWS_AS(stft(w, kDefault), std::invalid_argument);  // shorter than the window
  CHECK_THROWS_AS(stft(w, StftParams{100, 100, 10}), std::invalid_argument);  // non power of two
  CHECK_THROWS_AS(stft(w, StftParams{64, 96, 8}), std::invalid_argument);     // win > fft
  Spectrogram s;
  s.frames = 2;
  s.bins = 5;  // inconsistent with fft_size
  s.params = kDefault;
  s.data.assign(10, {0.0, 0.0});
  CHECK_THROWS_AS(istft(s, 64, 8000), std::invalid_argument);
}
