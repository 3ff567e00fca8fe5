#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace melstream {

// Radix-2 complex FFT with precomputed twiddles, double precision.
class Fft {
 public:
  explicit Fft(std::size_t size);

  std::size_t size() const { return size_; }

  // In-place forward transform, X[k] = sum_n x[n] exp(-2 pi i k n / N).
  void forward(std::span<std::complex<double>> data) const;

  // Real input of length <= size(), zero-padded. Writes size()/2 + 1 bins.
  void forward_real(std::span<const double> input, std::span<std::complex<double>> bins,
                    std::vector<std::complex<double>>& scratch) const;

 private:
  std::size_t size_;
  std::vector<std::size_t> bit_reverse_;
  std::vector<std::complex<double>> twiddles_;
};

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace melstream
