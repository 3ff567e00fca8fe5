#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"
#include "melstream/kernels.hpp"

namespace melstream::kernels {

namespace {

constexpr KernelTable kScalar{Isa::Scalar,       "scalar",      scalar::dot,
                              scalar::axpy,      scalar::add,   scalar::max,
                              scalar::scale_shift, scalar::relu};

#ifdef MELSTREAM_HAVE_AVX2
constexpr KernelTable kAvx2{Isa::Avx2,        "avx2",      avx2::dot,
                            avx2::axpy,       avx2::add,   avx2::max,
                            avx2::scale_shift, avx2::relu};

bool cpu_has_avx2() noexcept {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable* pick_default() noexcept {
  const KernelTable* best = &kScalar;
#ifdef MELSTREAM_HAVE_AVX2
  if (cpu_has_avx2()) best = &kAvx2;
#endif
  if (const char* env = std::getenv("MELSTREAM_SIMD")) {
    const std::string_view want(env);
    if (want == "scalar") return &kScalar;
    if (want == "avx2" && table_for(Isa::Avx2) != nullptr) return table_for(Isa::Avx2);
  }
  return best;
}

std::atomic<const KernelTable*>& active_slot() noexcept {
  static std::atomic<const KernelTable*> slot{pick_default()};
  return slot;
}

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

const KernelTable* table_for(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar:
      return &kScalar;
    case Isa::Avx2:
#ifdef MELSTREAM_HAVE_AVX2
      return cpu_has_avx2() ? &kAvx2 : nullptr;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::Scalar};
  if (table_for(Isa::Avx2) != nullptr) out.push_back(Isa::Avx2);
  return out;
}

const KernelTable& active() noexcept { return *active_slot().load(std::memory_order_relaxed); }

bool set_active_isa(Isa isa) noexcept {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) return false;
  active_slot().store(t, std::memory_order_relaxed);
  return true;
}

}  // namespace melstream::kernels
