#include "melstream/fft.hpp"

#include <cmath>
#include <numbers>

#include "melstream/error.hpp"

namespace melstream {

Fft::Fft(std::size_t size) : size_(size) {
  if (!is_power_of_two(size)) throw Error(ErrorCode::InvalidConfig, "FFT size must be a power of two");
  bit_reverse_.resize(size);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < size) ++bits;
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    bit_reverse_[i] = r;
  }
  twiddles_.resize(size / 2);
  for (std::size_t k = 0; k < size / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size);
    twiddles_[k] = {std::cos(angle), std::sin(angle)};
  }
}

void Fft::forward(std::span<std::complex<double>> data) const {
  const std::size_t n = size_;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = bit_reverse_[i];
    if (j > i) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // Written out to avoid the NaN-aware complex multiply.
        const std::complex<double> w = twiddles_[k * stride];
        const std::complex<double> d = data[start + k + half];
        const std::complex<double> t{w.real() * d.real() - w.imag() * d.imag(),
                                     w.real() * d.imag() + w.imag() * d.real()};
        const std::complex<double> u = data[start + k];
        data[start + k] = u + t;
        data[start + k + half] = u - t;
      }
    }
  }
}

void Fft::forward_real(std::span<const double> input, std::span<std::complex<double>> bins,
                       std::vector<std::complex<double>>& scratch) const {
  scratch.assign(size_, {0.0, 0.0});
  for (std::size_t i = 0; i < input.size() && i < size_; ++i) scratch[i] = {input[i], 0.0};
  forward(scratch);
  for (std::size_t k = 0; k <= size_ / 2; ++k) bins[k] = scratch[k];
}

}  // namespace melstream
