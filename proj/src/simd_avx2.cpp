// AVX2+FMA kernel lane. Compiled with -mavx2 -mfma only in this translation
// unit; callers reach it through the dispatch table after a runtime CPU check.
// exp/log are polynomial (|error| ~ 1-2 ulp), so this lane is tolerance-equal,
// not bit-equal, to the scalar lane; min_affine deliberately avoids FMA so its
// values match the scalar lane bitwise.

#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <cstring>

#include "gmc/simd.hpp"

namespace gmc::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
  }
  for (; i + 4 <= n; i += 4)
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double s, const double* x, double* y, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_fmadd_pd(vs, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, v);
  }
  for (; i < n; ++i) y[i] += s * x[i];
}

// Column blocks of 16 stay in registers across all rows, so each x element is
// read exactly once and acc traffic is one store per column.
void weighted_accum_avx2(const double* a, std::size_t nrows, const double* x,
                         std::ptrdiff_t stride, double* acc, std::size_t ncols) {
  std::size_t c = 0;
  for (; c + 16 <= ncols; c += 16) {
    __m256d a0 = _mm256_loadu_pd(acc + c);
    __m256d a1 = _mm256_loadu_pd(acc + c + 4);
    __m256d a2 = _mm256_loadu_pd(acc + c + 8);
    __m256d a3 = _mm256_loadu_pd(acc + c + 12);
    for (std::size_t j = 0; j < nrows; ++j) {
      const double* row = x + c + static_cast<std::ptrdiff_t>(j) * stride;
      const __m256d s = _mm256_set1_pd(a[j]);
      a0 = _mm256_fmadd_pd(s, _mm256_loadu_pd(row), a0);
      a1 = _mm256_fmadd_pd(s, _mm256_loadu_pd(row + 4), a1);
      a2 = _mm256_fmadd_pd(s, _mm256_loadu_pd(row + 8), a2);
      a3 = _mm256_fmadd_pd(s, _mm256_loadu_pd(row + 12), a3);
    }
    _mm256_storeu_pd(acc + c, a0);
    _mm256_storeu_pd(acc + c + 4, a1);
    _mm256_storeu_pd(acc + c + 8, a2);
    _mm256_storeu_pd(acc + c + 12, a3);
  }
  for (; c + 4 <= ncols; c += 4) {
    __m256d a0 = _mm256_loadu_pd(acc + c);
    for (std::size_t j = 0; j < nrows; ++j) {
      const double* row = x + c + static_cast<std::ptrdiff_t>(j) * stride;
      a0 = _mm256_fmadd_pd(_mm256_set1_pd(a[j]), _mm256_loadu_pd(row), a0);
    }
    _mm256_storeu_pd(acc + c, a0);
  }
  for (; c < ncols; ++c) {
    double s = acc[c];
    for (std::size_t j = 0; j < nrows; ++j)
      s += a[j] * x[static_cast<std::ptrdiff_t>(c) + static_cast<std::ptrdiff_t>(j) * stride];
    acc[c] = s;
  }
}

// ---- polynomial exp/log on __m256d ----

const __m256d kExpHi = _mm256_set1_pd(709.782712893384);
const __m256d kExpLo = _mm256_set1_pd(-745.1332191019412);
const __m256d kLog2E = _mm256_set1_pd(1.4426950408889634074);
const __m256d kLn2Hi = _mm256_set1_pd(6.93145751953125e-1);
const __m256d kLn2Lo = _mm256_set1_pd(1.42860682030941723212e-6);

inline __m256d exp_pd(__m256d x) {
  const __m256d over = _mm256_cmp_pd(x, kExpHi, _CMP_GT_OQ);
  const __m256d under = _mm256_cmp_pd(x, kExpLo, _CMP_LT_OQ);
  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, kLog2E),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, kLn2Hi, x);
  r = _mm256_fnmadd_pd(n, kLn2Lo, r);

  // exp(r) on |r| <= ln2/2, Taylor degree 13 (truncation ~4e-18)
  __m256d p = _mm256_set1_pd(1.6059043836821613e-10);  // 1/13!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.08767569878681e-9));    // 1/12!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.505210838544172e-8));   // 1/11!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985893e-7));  // 1/10!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.755731922398589e-6));   // 1/9!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.48015873015873e-5));    // 1/8!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.984126984126984e-4));   // 1/7!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.3888888888888889e-3));  // 1/6!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(8.333333333333333e-3));   // 1/5!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(4.1666666666666664e-2));  // 1/4!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.6666666666666666e-1));  // 1/3!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(5e-1));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // scale by 2^n in two exact halves so n in [-1075, 1024] never over/under
  // flows an intermediate exponent
  __m128i n32 = _mm256_cvtpd_epi32(n);
  __m128i h32 = _mm_srai_epi32(n32, 1);
  __m128i r32 = _mm_sub_epi32(n32, h32);
  __m256i h64 = _mm256_cvtepi32_epi64(h32);
  __m256i r64 = _mm256_cvtepi32_epi64(r32);
  const __m256i bias = _mm256_set1_epi64x(1023);
  __m256d sh = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(h64, bias), 52));
  __m256d sr = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(r64, bias), 52));
  __m256d res = _mm256_mul_pd(_mm256_mul_pd(p, sh), sr);

  res = _mm256_blendv_pd(res, _mm256_set1_pd(HUGE_VAL), over);
  res = _mm256_blendv_pd(res, _mm256_setzero_pd(), under);
  return res;
}

const __m256d kSqrt2 = _mm256_set1_pd(1.4142135623730951);
const __m256i kMantMask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
const __m256i kOneBits = _mm256_set1_epi64x(0x3FF0000000000000LL);
const __m256d kMagic52 = _mm256_set1_pd(4503599627370496.0);  // 2^52

// log(x) for x > 0 (normal or subnormal); atanh series, ~1-2 ulp absolute.
inline __m256d log_pd(__m256d x) {
  // prescale subnormals by 2^54
  const __m256d tiny = _mm256_cmp_pd(x, _mm256_set1_pd(2.2250738585072014e-308),
                                     _CMP_LT_OQ);
  x = _mm256_blendv_pd(x, _mm256_mul_pd(x, _mm256_set1_pd(0x1p54)), tiny);
  __m256d ebias = _mm256_blendv_pd(_mm256_setzero_pd(), _mm256_set1_pd(54.0), tiny);

  __m256i bits = _mm256_castpd_si256(x);
  __m256i expo = _mm256_srli_epi64(bits, 52);  // biased exponent, < 2^11
  __m256d e = _mm256_sub_pd(
      _mm256_castsi256_pd(_mm256_or_si256(expo, _mm256_castpd_si256(kMagic52))),
      kMagic52);
  e = _mm256_sub_pd(e, _mm256_set1_pd(1023.0));
  __m256d m = _mm256_castsi256_pd(
      _mm256_or_si256(_mm256_and_si256(bits, kMantMask), kOneBits));

  const __m256d big = _mm256_cmp_pd(m, kSqrt2, _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), big);
  e = _mm256_add_pd(e, _mm256_and_pd(big, _mm256_set1_pd(1.0)));
  e = _mm256_sub_pd(e, ebias);

  const __m256d one = _mm256_set1_pd(1.0);
  __m256d t = _mm256_div_pd(_mm256_sub_pd(m, one), _mm256_add_pd(m, one));
  __m256d s = _mm256_mul_pd(t, t);

  // atanh series: 2t * (1 + s/3 + s^2/5 + ... + s^11/23)
  __m256d p = _mm256_set1_pd(1.0 / 23.0);
  p = _mm256_fmadd_pd(p, s, _mm256_set1_pd(1.0 / 21.0));
  p = _mm256_fmadd_pd(p, s, _mm256_set1_pd(1.0 / 19.0));
  p = _mm256_fmadd_pd(p, s, _mm256_set1_pd(1.0 / 17.0));
  p = _mm256_fmadd_pd(p, s, _mm256_set1_pd(1.0 / 15.0));
  p = _mm256_fmadd_pd(p, s, _mm256_set1_pd(1.0 / 13.0));
  p = _mm256_fmadd_pd(p, s, _mm256_set1_pd(1.0 / 11.0));
  p = _mm256_fmadd_pd(p, s, _mm256_set1_pd(1.0 / 9.0));
  p = _mm256_fmadd_pd(p, s, _mm256_set1_pd(1.0 / 7.0));
  p = _mm256_fmadd_pd(p, s, _mm256_set1_pd(1.0 / 5.0));
  p = _mm256_fmadd_pd(p, s, _mm256_set1_pd(1.0 / 3.0));
  p = _mm256_fmadd_pd(p, s, one);
  __m256d logm = _mm256_mul_pd(_mm256_add_pd(t, t), p);

  __m256d res = _mm256_fmadd_pd(e, kLn2Lo, logm);
  res = _mm256_fmadd_pd(e, kLn2Hi, res);
  return res;
}

void vexp_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = std::exp(x[i]);
}

void vpow_avx2(const double* x, double q, double* out, std::size_t n) {
  if (q == 1.0) {
    std::memcpy(out, x, n * sizeof(double));
    return;
  }
  if (q == 0.0) {
    for (std::size_t i = 0; i < n; ++i) out[i] = 1.0;
    return;
  }
  const __m256d vq = _mm256_set1_pd(q);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d lg = log_pd(_mm256_loadu_pd(x + i));
    _mm256_storeu_pd(out + i, exp_pd(_mm256_mul_pd(lg, vq)));
  }
  for (; i < n; ++i) out[i] = std::pow(x[i], q);
}

double min_affine_avx2(double a, const double* q, const double* t, std::size_t n,
                       std::size_t* argmin) {
  // mul+add (no FMA) so values match the scalar lane bit for bit; the scalar
  // rescan below therefore finds the exact minimum's first index.
  const __m256d va = _mm256_set1_pd(a);
  __m256d best = _mm256_set1_pd(HUGE_VAL);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_add_pd(_mm256_mul_pd(va, _mm256_loadu_pd(q + i)),
                              _mm256_loadu_pd(t + i));
    best = _mm256_min_pd(best, v);
  }
  __m128d lo = _mm_min_pd(_mm256_castpd256_pd128(best), _mm256_extractf128_pd(best, 1));
  double m = _mm_cvtsd_f64(_mm_min_sd(lo, _mm_unpackhi_pd(lo, lo)));
  for (; i < n; ++i) {
    const double v = a * q[i] + t[i];
    if (v < m) m = v;
  }
  if (argmin) {
    std::size_t bi = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (a * q[k] + t[k] == m) {
        bi = k;
        break;
      }
    }
    *argmin = bi;
  }
  return m;
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{
      dot_avx2,  axpy_avx2, weighted_accum_avx2,
      vexp_avx2, vpow_avx2, min_affine_avx2,
      "avx2",
  };
  return table;
}

}  // namespace gmc::simd
