#pragma once

// Float inner loops shared by the mel front end and the layer ops.
//
// Every kernel has a scalar reference implementation; wider variants are
// compiled per ISA and chosen once at startup from CPUID. Selection can be
// overridden with MELSTREAM_SIMD=scalar|avx2 or programmatically via
// set_active_isa(). All callers in one process use the same table, so offline
// and streaming paths stay bit-identical to each other.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace melstream::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;
  // sum_i a[i] * b[i]
  float (*dot)(const float* a, const float* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  // y[i] += x[i]
  void (*add)(const float* x, float* y, std::size_t n);
  // y[i] = max(y[i], x[i])
  void (*max)(const float* x, float* y, std::size_t n);
  // y[i] = y[i] * scale[i] + shift[i]
  void (*scale_shift)(const float* scale, const float* shift, float* y, std::size_t n);
  // y[i] = max(y[i], 0)
  void (*relu)(float* y, std::size_t n);
};

const KernelTable& scalar_table() noexcept;

// nullptr when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* table_for(Isa isa) noexcept;

std::vector<Isa> available_isas();

const KernelTable& active() noexcept;

// Intended for tests and benchmarks; not safe to call while other threads
// are running kernels. Returns false if the ISA is unavailable.
bool set_active_isa(Isa isa) noexcept;

inline float dot(std::span<const float> a, std::span<const float> b) {
  return active().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void add(std::span<const float> x, std::span<float> y) {
  active().add(x.data(), y.data(), x.size());
}

inline void max(std::span<const float> x, std::span<float> y) {
  active().max(x.data(), y.data(), x.size());
}

inline void scale_shift(std::span<const float> scale, std::span<const float> shift,
                        std::span<float> y) {
  active().scale_shift(scale.data(), shift.data(), y.data(), y.size());
}

inline void relu(std::span<float> y) { active().relu(y.data(), y.size()); }

}  // namespace melstream::kernels
