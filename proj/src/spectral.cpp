#include "relate/spectral.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "relate/core.hpp"

namespace relate::spectral {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ContractError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (auto& v : a) v /= static_cast<double>(n);
}

std::vector<std::complex<double>> fft_padded(std::span<const double> x) {
  std::vector<std::complex<double>> a(next_pow2(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = x[i];
  fft(a);
  return a;
}

HaarDecomposition haar_decompose(std::span<const double> x, std::size_t levels) {
  const std::size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ContractError("haar: length must be a power of two");
  if ((std::size_t{1} << levels) > n) throw ContractError("haar: too many levels for signal length");
  HaarDecomposition d;
  d.approximation.assign(x.begin(), x.end());
  const double r = 1.0 / std::sqrt(2.0);
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t half = d.approximation.size() / 2;
    std::vector<double> approx(half), detail(half);
    for (std::size_t i = 0; i < half; ++i) {
      approx[i] = (d.approximation[2 * i] + d.approximation[2 * i + 1]) * r;
      detail[i] = (d.approximation[2 * i] - d.approximation[2 * i + 1]) * r;
    }
    d.approximation = std::move(approx);
    d.details.push_back(std::move(detail));
  }
  return d;
}

std::vector<double> haar_reconstruct(const HaarDecomposition& d) {
  std::vector<double> cur = d.approximation;
  const double r = 1.0 / std::sqrt(2.0);
  for (std::size_t l = d.details.size(); l-- > 0;) {
    const auto& detail = d.details[l];
    if (detail.size() != cur.size()) throw ContractError("haar: inconsistent decomposition");
    std::vector<double> next(2 * cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i) {
      next[2 * i] = (cur[i] + detail[i]) * r;
      next[2 * i + 1] = (cur[i] - detail[i]) * r;
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace relate::spectral
