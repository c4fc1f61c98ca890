#pragma once

#include <cstddef>

namespace gmc::simd {

/// Table of hot-loop kernels. Two implementations exist: a plain scalar
/// reference and an AVX2+FMA variant selected once at startup. The vector
/// variants are not bit-identical to the scalar lane (different summation
/// order, polynomial exp/log instead of libm); equivalence is pinned by
/// tolerance tests. Whatever lane is active, results are deterministic for
/// a given machine: selection depends on CPU capabilities only.
struct KernelTable {
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);

  // y[i] += s * x[i]
  void (*axpy)(double s, const double* x, double* y, std::size_t n);

  // acc[c] += sum_j a[j] * x[j*stride + c]   (stride in doubles, may be
  // negative; used to walk prediction history backwards without copying)
  void (*weighted_accum)(const double* a, std::size_t nrows, const double* x,
                         std::ptrdiff_t stride, double* acc, std::size_t ncols);

  // out[i] = exp(x[i])
  void (*vexp)(const double* x, double* out, std::size_t n);

  // out[i] = x[i]^q, x[i] > 0. q == 1 copies and q == 0 fills with 1.0 in
  // both lanes so those cases are exact everywhere.
  void (*vpow)(const double* x, double q, double* out, std::size_t n);

  // min_i (a*q[i] + t[i]); *argmin = lowest index attaining the minimum.
  // Both lanes evaluate a*q[i] + t[i] as one multiply and one add (no FMA)
  // so the argmin scan agrees bitwise between them.
  double (*min_affine)(double a, const double* q, const double* t,
                       std::size_t n, std::size_t* argmin);

  const char* name;
};

const KernelTable& scalar_table();
const KernelTable& avx2_table();    // valid only if avx2_active()
const KernelTable& active_table();  // scalar unless AVX2 detected
bool avx2_active();

}  // namespace gmc::simd
