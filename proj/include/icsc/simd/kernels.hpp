#pragma once

#include <cstddef>
#include <span>
#include <string>

// Inner-loop kernels used by the network layers. Every kernel has a scalar
// reference implementation; vector variants are selected at runtime from the
// host CPU features and must agree with the reference (bit-exact for the
// elementwise kernels, within rounding for reductions).

namespace icsc::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  const char* name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] = max(x[i], 0)
  void (*relu_forward)(const double* x, double* y, std::size_t n);
  // gx[i] += x[i] > 0 ? gy[i] : 0
  void (*relu_backward)(const double* x, const double* gy, double* gx, std::size_t n);
};

const KernelTable& scalar_kernels();
/// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_kernels();

bool cpu_supports(Isa isa);

/// Kernels used by the layers. Chosen on first use: the ICSC_POSE_SIMD
/// environment variable (scalar|avx2|auto) if set, else the best supported.
const KernelTable& active_kernels();

/// Overrides the runtime choice. Throws UsageError if the host lacks `isa`.
void set_active_isa(Isa isa);

Isa parse_isa(const std::string& name);
const char* to_string(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active_kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active_kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace icsc::simd
