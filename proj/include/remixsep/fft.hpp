#pragma once

#include <complex>
#include <vector>

namespace remixsep::fft {

bool is_power_of_two(std::size_t n);

// In-place iterative radix-2 transform. inverse=true applies the 1/n factor.
void transform(std::vector<std::complex<double>>& a, bool inverse);

// Real-input FFT of size n (power of two); returns n/2+1 bins.
std::vector<std::complex<double>> rfft(const double* x, std::size_t n);

// Inverse of rfft assuming Hermitian symmetry; imaginary parts of bins 0 and
// n/2 are ignored. Returns n real samples.
std::vector<double> irfft(const std::complex<double>* bins, std::size_t n);

}  // namespace remixsep::fft
