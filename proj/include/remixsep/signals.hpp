#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace remixsep {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  std::size_t length() const { return samples.size(); }
};

// B mixtures of uniform length, row-major.
struct WaveBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  int sample_rate = 8000;
  std::vector<double> data;  // batch * length

  WaveBatch() = default;
  WaveBatch(std::size_t b, std::size_t t, int sr)
      : batch(b), length(t), sample_rate(sr), data(b * t, 0.0) {}

  double* item(std::size_t b) { return data.data() + b * length; }
  const double* item(std::size_t b) const { return data.data() + b * length; }
  Waveform item_waveform(std::size_t b) const {
    return Waveform{std::vector<double>(item(b), item(b) + length), sample_rate};
  }
};

// B x N x T separated sources, row-major.
struct SourceStack {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t length = 0;
  int sample_rate = 8000;
  std::vector<double> data;  // batch * channels * length

  SourceStack() = default;
  SourceStack(std::size_t b, std::size_t n, std::size_t t, int sr)
      : batch(b), channels(n), length(t), sample_rate(sr), data(b * n * t, 0.0) {}

  double* chan(std::size_t b, std::size_t n) { return data.data() + (b * channels + n) * length; }
  const double* chan(std::size_t b, std::size_t n) const {
    return data.data() + (b * channels + n) * length;
  }
};

struct StftParams {
  int fft_size = 256;
  int win_size = 256;
  int hop = 64;
};

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;  // fft_size/2 + 1
  StftParams params;
  std::vector<std::complex<double>> data;  // frames * bins

  std::complex<double>* frame(std::size_t f) { return data.data() + f * bins; }
  const std::complex<double>* frame(std::size_t f) const { return data.data() + f * bins; }
};

// Analysis geometry: the signal is mirror-padded by win/2 on each side and
// frames are taken every hop samples over the padded extent, so every sample
// of [0, T) sits under a usable window sum and istft(stft(w)) == w.
struct FrameSpec {
  std::size_t frames = 0;
  std::size_t pad = 0;         // left/right padding, win/2
  std::size_t padded_len = 0;  // (frames-1)*hop + win
};

void validate_stft_params(const StftParams& p);
FrameSpec frame_spec(std::size_t length, const StftParams& p);

std::vector<double> hann_periodic(int win_size);

Spectrogram stft(const Waveform& w, const StftParams& p);
Waveform istft(const Spectrogram& s, std::size_t length, int sample_rate);

// Adjoint of the (linear) istft map, used for backprop: given dL/d(waveform)
// returns dL/d(spectrogram) with dL/dRe and dL/dIm packed as a complex value.
// Imaginary gradients at DC and Nyquist are zero by convention (the forward
// path ignores them).
Spectrogram istft_adjoint(const double* grad_wave, std::size_t length, std::size_t frames,
                          const StftParams& p);

struct NormParams {
  double mean = 0.0;
  double std = 1.0;
  bool degenerate = false;  // input std fell below the epsilon floor
};

inline constexpr double kNormEps = 1e-8;

// Zero-mean / unit-std (population) normalization; silence is zeroed with the
// std floored at kNormEps so de-normalization stays well defined.
NormParams normalize_mixture_inplace(double* x, std::size_t n);
std::pair<Waveform, NormParams> normalize_mixture(const Waveform& w);

double dot(const double* a, const double* b, std::size_t n);
double energy(const double* a, std::size_t n);

}  // namespace remixsep
