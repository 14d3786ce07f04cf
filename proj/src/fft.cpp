#include "remixsep/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace remixsep::fft {

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void transform(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("fft: size must be a power of two");
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& c : a) c *= inv;
  }
}

std::vector<std::complex<double>> rfft(const double* x, std::size_t n) {
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = {x[i], 0.0};
  transform(buf, false);
  buf.resize(n / 2 + 1);
  return buf;
}

std::vector<double> irfft(const std::complex<double>* bins, std::size_t n) {
  std::vector<std::complex<double>> buf(n);
  buf[0] = {bins[0].real(), 0.0};
  buf[n / 2] = {bins[n / 2].real(), 0.0};
  for (std::size_t k = 1; k < n / 2; ++k) {
    buf[k] = bins[k];
    buf[n - k] = std::conj(bins[k]);
  }
  transform(buf, true);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
  return out;
}

}  // namespace remixsep::fft
