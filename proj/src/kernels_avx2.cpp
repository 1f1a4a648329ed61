// AVX2 + FMA variants. This TU is compiled with -mavx2 -mfma and only ever
// entered after the cpuid probe in kernels.cpp succeeds.
//
// Elementwise kernels (lerp_blend, scale_shift, relu, relu_backward, clamp01,
// adam_step) avoid FMA and keep the scalar operation order, so they produce
// bit-identical results to the scalar table. axpy and the reductions use FMA
// and lane-parallel accumulators and may differ in the last bits.

#include "cels/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace cels::kern {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    __m256d y1 = _mm256_loadu_pd(y + i + 4);
    y0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), y0);
    y1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i + 4), y1);
    _mm256_storeu_pd(y + i, y0);
    _mm256_storeu_pd(y + i + 4, y1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    y0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), y0);
    _mm256_storeu_pd(y + i, y0);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  double acc = hsum(acc0);
  for (; i < n; ++i) acc += x[i];
  return acc;
}

double sumsq_avx2(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    acc0 = _mm256_fmadd_pd(v, v, acc0);
  }
  double acc = hsum(acc0);
  for (; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double l1_dist_avx2(const double* a, const double* b, std::size_t n) {
  const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_add_pd(acc0, _mm256_and_pd(d, absmask));
  }
  double acc = hsum(acc0);
  for (; i < n; ++i) acc += std::abs(a[i] - b[i]);
  return acc;
}

double l2sq_dist_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(d, d, acc0);
  }
  double acc = hsum(acc0);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void lerp_blend_avx2(const double* a, const double* b, const double* t,
                     double* out, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d tv = _mm256_loadu_pd(t + i);
    __m256d left = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_sub_pd(one, tv));
    __m256d right = _mm256_mul_pd(_mm256_loadu_pd(b + i), tv);
    _mm256_storeu_pd(out + i, _mm256_add_pd(left, right));
  }
  for (; i < n; ++i) out[i] = a[i] * (1.0 - t[i]) + b[i] * t[i];
}

void scale_shift_avx2(const double* x, double a, double b, double* y,
                      std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const __m256d bv = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(v, bv));
  }
  for (; i < n; ++i) y[i] = a * x[i] + b;
}

void relu_avx2(const double* x, double* y, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_avx2(const double* x, const double* dy, double* dx,
                        std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void clamp01_avx2(double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    v = _mm256_min_pd(_mm256_max_pd(v, zero), one);
    _mm256_storeu_pd(x + i, v);
  }
  for (; i < n; ++i) {
    if (x[i] < 0.0) x[i] = 0.0;
    if (x[i] > 1.0) x[i] = 1.0;
  }
}

void adam_step_avx2(double* p, double* m, double* v, const double* g,
                    double lr, double bc1, double bc2, double b1, double b2,
                    double eps, std::size_t n) {
  const __m256d b1v = _mm256_set1_pd(b1);
  const __m256d b2v = _mm256_set1_pd(b2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - b1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - b2);
  const __m256d lrv = _mm256_set1_pd(lr);
  const __m256d bc1v = _mm256_set1_pd(bc1);
  const __m256d bc2v = _mm256_set1_pd(bc2);
  const __m256d epsv = _mm256_set1_pd(eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1v, _mm256_loadu_pd(m + i)),
                               _mm256_mul_pd(omb1, gv));
    __m256d g2 = _mm256_mul_pd(gv, gv);
    __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2v, _mm256_loadu_pd(v + i)),
                               _mm256_mul_pd(omb2, g2));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    __m256d mhat = _mm256_div_pd(mv, bc1v);
    __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_div_pd(vv, bc2v)), epsv);
    __m256d step = _mm256_div_pd(_mm256_mul_pd(lrv, mhat), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * (g[i] * g[i]);
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops table = {
      axpy_avx2,        dot_avx2,         sum_avx2,
      sumsq_avx2,       l1_dist_avx2,     l2sq_dist_avx2,
      lerp_blend_avx2,  scale_shift_avx2, relu_avx2,
      relu_backward_avx2, clamp01_avx2,   adam_step_avx2,
  };
  return table;
}

}  // namespace cels::kern
