#pragma once

#include <cstddef>

namespace icsc::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void relu_forward_scalar(const double* x, double* y, std::size_t n);
void relu_backward_scalar(const double* x, const double* gy, double* gx, std::size_t n);

#if defined(__x86_64__) || defined(_M_X64)
#define ICSC_HAVE_AVX2_KERNELS 1
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void relu_forward_avx2(const double* x, double* y, std::size_t n);
void relu_backward_avx2(const double* x, const double* gy, double* gx, std::size_t n);
#endif

}  // namespace icsc::simd::detail
