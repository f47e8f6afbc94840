#include <atomic>
#include <cstdlib>

#include "icsc/error.hpp"
#include "icsc/simd/kernels.hpp"
#include "kernels_impl.hpp"

namespace icsc::simd {

namespace {

constexpr KernelTable kScalar{Isa::kScalar, "scalar", detail::dot_scalar, detail::axpy_scalar,
                              detail::relu_forward_scalar, detail::relu_backward_scalar};

#if defined(ICSC_HAVE_AVX2_KERNELS)
constexpr KernelTable kAvx2{Isa::kAvx2, "avx2", detail::dot_avx2, detail::axpy_avx2,
                            detail::relu_forward_avx2, detail::relu_backward_avx2};
#endif

const KernelTable* table_for(Isa isa) {
  return isa == Isa::kScalar ? &kScalar : avx2_kernels();
}

const KernelTable* choose_default() {
  if (const char* env = std::getenv("ICSC_POSE_SIMD"); env != nullptr && *env != '\0') {
    const std::string name(env);
    if (name != "auto") {
      const Isa isa = parse_isa(name);
      if (!cpu_supports(isa)) throw UsageError("ICSC_POSE_SIMD=" + name + " not supported here");
      return table_for(isa);
    }
  }
  return cpu_supports(Isa::kAvx2) ? table_for(Isa::kAvx2) : &kScalar;
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

const KernelTable* avx2_kernels() {
#if defined(ICSC_HAVE_AVX2_KERNELS)
  return &kAvx2;
#else
  return nullptr;
#endif
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return true;
    case Isa::kAvx2:
#if defined(ICSC_HAVE_AVX2_KERNELS)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& active_kernels() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = choose_default();
    const KernelTable* expected = nullptr;
    if (!g_active.compare_exchange_strong(expected, t)) t = expected;
  }
  return *t;
}

void set_active_isa(Isa isa) {
  if (!cpu_supports(isa)) throw UsageError(std::string("ISA not supported: ") + to_string(isa));
  g_active.store(table_for(isa), std::memory_order_release);
}

Isa parse_isa(const std::string& name) {
  if (name == "scalar") return Isa::kScalar;
  if (name == "avx2") return Isa::kAvx2;
  throw UsageError("unknown SIMD variant '" + name + "' (expected scalar|avx2|auto)");
}

const char* to_string(Isa isa) { return isa == Isa::kScalar ? "scalar" : "avx2"; }

}  // namespace icsc::simd
