#pragma once

#include <cstddef>

namespace melstream::kernels {

namespace scalar {
float dot(const float* a, const float* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void add(const float* x, float* y, std::size_t n);
void max(const float* x, float* y, std::size_t n);
void scale_shift(const float* scale, const float* shift, float* y, std::size_t n);
void relu(float* y, std::size_t n);
}  // namespace scalar

#ifdef MELSTREAM_HAVE_AVX2
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void add(const float* x, float* y, std::size_t n);
void max(const float* x, float* y, std::size_t n);
void scale_shift(const float* scale, const float* shift, float* y, std::size_t n);
void relu(float* y, std::size_t n);
}  // namespace avx2
#endif

}  // namespace melstream::kernels
