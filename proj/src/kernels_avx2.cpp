// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "predmetric/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace predmetric::kernels::avx2 {

namespace {

// exp(x) for packed doubles: x = n ln2 + r, |r| <= ln2/2, degree-13 Taylor
// polynomial for e^r, then scale by 2^n through the exponent bits. Inputs
// below -708 flush to zero; inputs above 709 saturate to +inf.
inline __m256d exp_pd(__m256d x) {
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d lo = _mm256_set1_pd(-708.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  const __m256d overflow = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  // Horner on 1/k! coefficients, k = 13 .. 0.
  static constexpr double c[14] = {1.0,
                                   1.0,
                                   1.0 / 2.0,
                                   1.0 / 6.0,
                                   1.0 / 24.0,
                                   1.0 / 120.0,
                                   1.0 / 720.0,
                                   1.0 / 5040.0,
                                   1.0 / 40320.0,
                                   1.0 / 362880.0,
                                   1.0 / 3628800.0,
                                   1.0 / 39916800.0,
                                   1.0 / 479001600.0,
                                   1.0 / 6227020800.0};
  __m256d p = _mm256_set1_pd(c[13]);
  for (int k = 12; k >= 0; --k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[k]));

  // 2^n via the biased exponent; n in [-1022, 1023] after clamping.
  const __m128i ni = _mm256_cvtpd_epi32(n);
  __m256i e = _mm256_cvtepi32_epi64(ni);
  e = _mm256_add_epi64(e, _mm256_set1_epi64x(1023));
  e = _mm256_slli_epi64(e, 52);
  __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(e));

  result = _mm256_andnot_pd(underflow, result);
  result = _mm256_blendv_pd(result, _mm256_set1_pd(std::numeric_limits<double>::infinity()), overflow);
  return result;
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmax(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d m = _mm_max_pd(lo, hi);
  return std::max(_mm_cvtsd_f64(m), _mm_cvtsd_f64(_mm_unpackhi_pd(m, m)));
}

template <class Load>
double logsumexp_impl(std::size_t n, const Load& load) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  __m256d vmax = _mm256_set1_pd(neg_inf);
  for (; i + 4 <= n; i += 4) vmax = _mm256_max_pd(vmax, load(i));
  double m = hmax(vmax);
  for (std::size_t j = i; j < n; ++j) m = std::max(m, load.scalar(j));
  if (!std::isfinite(m)) return m;

  const __m256d vm = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, exp_pd(_mm256_sub_pd(load(i), vm)));
  double s = hsum(acc);
  for (std::size_t j = i; j < n; ++j) s += std::exp(load.scalar(j) - m);
  return m + std::log(s);
}

struct LoadOne {
  const double* a;
  __m256d operator()(std::size_t i) const { return _mm256_loadu_pd(a + i); }
  double scalar(std::size_t i) const { return a[i]; }
};

struct LoadSum {
  const double* a;
  const double* b;
  __m256d operator()(std::size_t i) const { return _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)); }
  double scalar(std::size_t i) const { return a[i] + b[i]; }
};

}  // namespace

double logsumexp(std::span<const double> a) { return logsumexp_impl(a.size(), LoadOne{a.data()}); }

double logsumexp_sum(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return logsumexp_impl(a.size(), LoadSum{a.data(), b.data()});
}

void gaussian_log_kernel(double y, std::span<const double> mean, std::span<const double> inv_scale,
                         std::span<const double> offset, std::span<double> out) {
  assert(mean.size() == out.size() && inv_scale.size() == out.size() && offset.size() == out.size());
  const std::size_t n = out.size();
  const __m256d vy = _mm256_set1_pd(y);
  const __m256d neg_half = _mm256_set1_pd(-0.5);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d z = _mm256_mul_pd(_mm256_sub_pd(vy, _mm256_loadu_pd(mean.data() + i)),
                                    _mm256_loadu_pd(inv_scale.data() + i));
    _mm256_storeu_pd(out.data() + i, _mm256_fmadd_pd(neg_half, _mm256_mul_pd(z, z), _mm256_loadu_pd(offset.data() + i)));
  }
  for (; i < n; ++i) {
    const double z = (y - mean[i]) * inv_scale[i];
    out[i] = offset[i] - 0.5 * z * z;
  }
}

double sum_squared_deviation(std::span<const double> x, double m) {
  const std::size_t n = x.size();
  const __m256d vm = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x.data() + i), vm);
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += (x[i] - m) * (x[i] - m);
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  const std::size_t n = x.size();
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y.data() + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x.data() + i), _mm256_loadu_pd(y.data() + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  const std::size_t n = a.size();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace predmetric::kernels::avx2
