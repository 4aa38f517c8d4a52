#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace relate::spectral {

std::size_t next_pow2(std::size_t n);

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse = false);

/// FFT of `x` zero-padded to the next power of two.
std::vector<std::complex<double>> fft_padded(std::span<const double> x);

/// Orthonormal multilevel Haar decomposition of a power-of-two-length signal.
struct HaarDecomposition {
  std::vector<double> approximation;          // coarsest level
  std::vector<std::vector<double>> details;   // details[0] = level 1 (finest)
};

HaarDecomposition haar_decompose(std::span<const double> x, std::size_t levels);
std::vector<double> haar_reconstruct(const HaarDecomposition& d);

}  // namespace relate::spectral
