#include <cmath>
#include <cstring>

#include "gmc/simd.hpp"

namespace gmc::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double s, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
}

void weighted_accum_scalar(const double* a, std::size_t nrows, const double* x,
                           std::ptrdiff_t stride, double* acc, std::size_t ncols) {
  for (std::size_t j = 0; j < nrows; ++j) {
    const double s = a[j];
    const double* row = x + static_cast<std::ptrdiff_t>(j) * stride;
    for (std::size_t c = 0; c < ncols; ++c) acc[c] += s * row[c];
  }
}

void vexp_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void vpow_scalar(const double* x, double q, double* out, std::size_t n) {
  if (q == 1.0) {
    std::memcpy(out, x, n * sizeof(double));
    return;
  }
  if (q == 0.0) {
    for (std::size_t i = 0; i < n; ++i) out[i] = 1.0;
    return;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = std::pow(x[i], q);
}

double min_affine_scalar(double a, const double* q, const double* t, std::size_t n,
                         std::size_t* argmin) {
  double best = a * q[0] + t[0];
  std::size_t bi = 0;
  for (std::size_t i = 1; i < n; ++i) {
    const double v = a * q[i] + t[i];
    if (v < best) {
      best = v;
      bi = i;
    }
  }
  if (argmin) *argmin = bi;
  return best;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      dot_scalar,  axpy_scalar,       weighted_accum_scalar,
      vexp_scalar, vpow_scalar,       min_affine_scalar,
      "scalar",
  };
  return table;
}

}  // namespace gmc::simd
