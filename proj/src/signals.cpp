#include "remixsep/signals.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "remixsep/fft.hpp"

namespace remixsep {

namespace {

constexpr double kWsumEps = 1e-12;

// Mirror (symmetric, edge-inclusive) extension: index -1 maps to 0, -2 to 1,
// T maps to T-1, and so on. Valid for pad <= T, which T >= win guarantees.
inline double padded_sample(const double* x, std::size_t n, long long idx) {
  if (idx < 0) idx = -idx - 1;
  const long long nn = static_cast<long long>(n);
  if (idx >= nn) idx = 2 * nn - 1 - idx;
  return x[idx];
}

std::vector<double> window_square_sum(const FrameSpec& fs, const StftParams& p,
                                      const std::vector<double>& win) {
  std::vector<double> wsum(fs.padded_len, 0.0);
  for (std::size_t f = 0; f < fs.frames; ++f) {
    const std::size_t off = f * static_cast<std::size_t>(p.hop);
    for (int i = 0; i < p.win_size; ++i) wsum[off + i] += win[i] * win[i];
  }
  return wsum;
}

}  // namespace

void validate_stft_params(const StftParams& p) {
  if (p.fft_size <= 0 || p.win_size <= 0 || p.hop <= 0)
    throw std::invalid_argument("stft: parameters must be positive");
  if (!(p.hop <= p.win_size && p.win_size <= p.fft_size))
    throw std::invalid_argument("stft: need hop <= win_size <= fft_size");
  if (!fft::is_power_of_two(static_cast<std::size_t>(p.fft_size)))
    throw std::invalid_argument("stft: fft_size must be a power of two");
  if (p.win_size % 2 != 0) throw std::invalid_argument("stft: win_size must be even");
}

FrameSpec frame_spec(std::size_t length, const StftParams& p) {
  validate_stft_params(p);
  FrameSpec fs;
  fs.pad = static_cast<std::size_t>(p.win_size) / 2;
  const std::size_t padded = length + 2 * fs.pad;
  const std::size_t hop = static_cast<std::size_t>(p.hop);
  const std::size_t win = static_cast<std::size_t>(p.win_size);
  fs.frames = (padded - win) / hop + 1;
  // guarantee coverage of the whole sliced region [pad, pad + length)
  while ((fs.frames - 1) * hop + win < fs.pad + length) ++fs.frames;
  fs.padded_len = (fs.frames - 1) * hop + win;
  return fs;
}

std::vector<double> hann_periodic(int win_size) {
  std::vector<double> w(win_size);
  for (int i = 0; i < win_size; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win_size);
  return w;
}

Spectrogram stft(const Waveform& w, const StftParams& p) {
  validate_stft_params(p);
  const std::size_t T = w.length();
  if (T == 0) throw std::invalid_argument("stft: empty waveform");
  if (T < static_cast<std::size_t>(p.win_size))
    throw std::invalid_argument("stft: waveform shorter than win_size");

  const FrameSpec fs = frame_spec(T, p);
  const auto win = hann_periodic(p.win_size);
  const std::size_t nfft = static_cast<std::size_t>(p.fft_size);

  Spectrogram s;
  s.frames = fs.frames;
  s.bins = nfft / 2 + 1;
  s.params = p;
  s.data.resize(s.frames * s.bins);

  std::vector<double> buf(nfft, 0.0);
  for (std::size_t f = 0; f < fs.frames; ++f) {
    const long long start = static_cast<long long>(f) * p.hop - static_cast<long long>(fs.pad);
    for (int i = 0; i < p.win_size; ++i)
      buf[i] = win[i] * padded_sample(w.samples.data(), T, start + i);
    for (std::size_t i = p.win_size; i < nfft; ++i) buf[i] = 0.0;
    auto bins = fft::rfft(buf.data(), nfft);
    std::copy(bins.begin(), bins.end(), s.frame(f));
  }
  return s;
}

Waveform istft(const Spectrogram& s, std::size_t length, int sample_rate) {
  validate_stft_params(s.params);
  const StftParams& p = s.params;
  if (s.bins != static_cast<std::size_t>(p.fft_size) / 2 + 1)
    throw std::invalid_argument("istft: bins inconsistent with fft_size");
  if (s.frames == 0) throw std::invalid_argument("istft: empty spectrogram");

  const auto win = hann_periodic(p.win_size);
  FrameSpec fs;
  fs.pad = static_cast<std::size_t>(p.win_size) / 2;
  fs.frames = s.frames;
  fs.padded_len = (s.frames - 1) * static_cast<std::size_t>(p.hop) +
                  static_cast<std::size_t>(p.win_size);

  std::vector<double> acc(fs.padded_len, 0.0);
  for (std::size_t f = 0; f < s.frames; ++f) {
    auto frame = fft::irfft(s.frame(f), static_cast<std::size_t>(p.fft_size));
    const std::size_t off = f * static_cast<std::size_t>(p.hop);
    for (int i = 0; i < p.win_size; ++i) acc[off + i] += win[i] * frame[i];
  }
  const auto wsum = window_square_sum(fs, p, win);

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(length, 0.0);
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t idx = fs.pad + t;
    if (idx < fs.padded_len && wsum[idx] > kWsumEps) out.samples[t] = acc[idx] / wsum[idx];
  }
  return out;
}

Spectrogram istft_adjoint(const double* grad_wave, std::size_t length, std::size_t frames,
                          const StftParams& p) {
  validate_stft_params(p);
  const auto win = hann_periodic(p.win_size);
  FrameSpec fs;
  fs.pad = static_cast<std::size_t>(p.win_size) / 2;
  fs.frames = frames;
  fs.padded_len = (frames - 1) * static_cast<std::size_t>(p.hop) +
                  static_cast<std::size_t>(p.win_size);
  const auto wsum = window_square_sum(fs, p, win);

  std::vector<double> gacc(fs.padded_len, 0.0);
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t idx = fs.pad + t;
    if (idx < fs.padded_len && wsum[idx] > kWsumEps) gacc[idx] = grad_wave[t] / wsum[idx];
  }

  const std::size_t nfft = static_cast<std::size_t>(p.fft_size);
  Spectrogram g;
  g.frames = frames;
  g.bins = nfft / 2 + 1;
  g.params = p;
  g.data.resize(g.frames * g.bins);

  std::vector<double> gamma(nfft, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t off = f * static_cast<std::size_t>(p.hop);
    for (int i = 0; i < p.win_size; ++i) gamma[i] = win[i] * gacc[off + i];
    for (std::size_t i = p.win_size; i < nfft; ++i) gamma[i] = 0.0;
    // adjoint of irfft: scaled forward DFT of the time-domain gradient
    auto spec = fft::rfft(gamma.data(), nfft);
    auto* dst = g.frame(f);
    const double scale = 2.0 / static_cast<double>(nfft);
    for (std::size_t k = 0; k < g.bins; ++k) {
      if (k == 0 || k == nfft / 2)
        dst[k] = {spec[k].real() / static_cast<double>(nfft), 0.0};
      else
        dst[k] = spec[k] * scale;
    }
  }
  return g;
}

NormParams normalize_mixture_inplace(double* x, std::size_t n) {
  NormParams np;
  if (n == 0) return np;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  np.mean = mean;
  if (sd <= kNormEps) {
    np.std = kNormEps;
    np.degenerate = true;
    for (std::size_t i = 0; i < n; ++i) x[i] = 0.0;
  } else {
    np.std = sd;
    for (std::size_t i = 0; i < n; ++i) x[i] = (x[i] - mean) / sd;
  }
  return np;
}

std::pair<Waveform, NormParams> normalize_mixture(const Waveform& w) {
  Waveform out = w;
  NormParams np = normalize_mixture_inplace(out.samples.data(), out.samples.size());
  return {std::move(out), np};
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double energy(const double* a, std::size_t n) { return dot(a, a, n); }

}  // namespace remixsep
