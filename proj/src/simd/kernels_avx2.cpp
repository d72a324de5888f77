// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include "lfdepth/simd/kernel_table.hpp"

namespace lfd::simd::detail {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double squared_distance_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(d, d, acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void xpby_avx2(const double* x, double beta, double* y, std::size_t n) {
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vb, _mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = x[i] + beta * y[i];
}

void reflect_update_avx2(double* y, const double* p, const double* f, const double* pk, double relax,
                         std::size_t n) {
  const __m256d vr = _mm256_set1_pd(relax);
  const __m256d two = _mm256_set1_pd(2.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d step = _mm256_sub_pd(_mm256_fmsub_pd(two, _mm256_loadu_pd(p + i), _mm256_loadu_pd(f + i)),
                                       _mm256_loadu_pd(pk + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vr, step, _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += relax * (2.0 * p[i] - f[i] - pk[i]);
}

void axpy_pair_avx2(double alpha, const double* a, const double* b, double sign, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vs = _mm256_set1_pd(sign);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pair = _mm256_fmadd_pd(vs, _mm256_loadu_pd(b + i), _mm256_loadu_pd(a + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, pair, _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * (a[i] + sign * b[i]);
}

void convolve_padded_avx2(const double* in, double* out, std::size_t n, const double* taps, std::size_t radius,
                          int parity) {
  const std::size_t width = 2 * radius + 1;
  const double sign = parity >= 0 ? 1.0 : -1.0;
  std::size_t i = 0;
  if (parity == 0) {
    for (; i + 4 <= n; i += 4) {
      const double* src = in + i;
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t k = 0; k < width; ++k) {
        acc = _mm256_fmadd_pd(_mm256_set1_pd(taps[k]), _mm256_loadu_pd(src + k), acc);
      }
      _mm256_storeu_pd(out + i, acc);
    }
  } else {
    for (; i + 4 <= n; i += 4) {
      const double* src = in + i;
      __m256d acc = _mm256_mul_pd(_mm256_set1_pd(taps[radius]), _mm256_loadu_pd(src + radius));
      for (std::size_t k = 0; k < radius; ++k) {
        // a - b is exact when a == b, so the pair vanishes on flat input
        const __m256d pair = parity > 0
                                 ? _mm256_add_pd(_mm256_loadu_pd(src + k), _mm256_loadu_pd(src + width - 1 - k))
                                 : _mm256_sub_pd(_mm256_loadu_pd(src + k), _mm256_loadu_pd(src + width - 1 - k));
        acc = _mm256_fmadd_pd(_mm256_set1_pd(taps[k]), pair, acc);
      }
      _mm256_storeu_pd(out + i, acc);
    }
  }
  for (; i < n; ++i) {
    const double* src = in + i;
    double s = 0.0;
    if (parity == 0) {
      for (std::size_t k = 0; k < width; ++k) s += taps[k] * src[k];
    } else {
      s = taps[radius] * src[radius];
      for (std::size_t k = 0; k < radius; ++k) s += taps[k] * (src[k] + sign * src[width - 1 - k]);
    }
    out[i] = s;
  }
}

void structure_products_avx2(const double* gs, const double* ga, double* jss, double* jsa, double* jaa,
                             std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d s = _mm256_loadu_pd(gs + i);
    const __m256d a = _mm256_loadu_pd(ga + i);
    _mm256_storeu_pd(jss + i, _mm256_mul_pd(s, s));
    _mm256_storeu_pd(jsa + i, _mm256_mul_pd(s, a));
    _mm256_storeu_pd(jaa + i, _mm256_mul_pd(a, a));
  }
  for (; i < n; ++i) {
    jss[i] = gs[i] * gs[i];
    jsa[i] = gs[i] * ga[i];
    jaa[i] = ga[i] * ga[i];
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{
      Isa::kAvx2,          "avx2",
      &dot_avx2,           &squared_distance_avx2,
      &axpy_avx2,          &xpby_avx2,
      &reflect_update_avx2, &axpy_pair_avx2,
      &convolve_padded_avx2,
      &structure_products_avx2,
  };
  return table;
}

}  // namespace lfd::simd::detail
