// AArch64 variant. NEON is part of the base ISA there, so no runtime check.

#include <arm_neon.h>

#include "lfdepth/simd/kernel_table.hpp"

namespace lfd::simd::detail {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double squared_distance_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    acc = vfmaq_f64(acc, d, d);
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void xpby_neon(const double* x, double beta, double* y, std::size_t n) {
  const float64x2_t vb = vdupq_n_f64(beta);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(x + i), vb, vld1q_f64(y + i)));
  for (; i < n; ++i) y[i] = x[i] + beta * y[i];
}

void reflect_update_neon(double* y, const double* p, const double* f, const double* pk, double relax,
                         std::size_t n) {
  const float64x2_t vr = vdupq_n_f64(relax);
  const float64x2_t two = vdupq_n_f64(2.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t step =
        vsubq_f64(vsubq_f64(vmulq_f64(two, vld1q_f64(p + i)), vld1q_f64(f + i)), vld1q_f64(pk + i));
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), vr, step));
  }
  for (; i < n; ++i) y[i] += relax * (2.0 * p[i] - f[i] - pk[i]);
}

void axpy_pair_neon(double alpha, const double* a, const double* b, double sign, double* y, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(sign);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t pair = vfmaq_f64(vld1q_f64(a + i), vs, vld1q_f64(b + i));
    vst1q_f64(y + i, vfmaq_n_f64(vld1q_f64(y + i), pair, alpha));
  }
  for (; i < n; ++i) y[i] += alpha * (a[i] + sign * b[i]);
}

void convolve_padded_neon(const double* in, double* out, std::size_t n, const double* taps, std::size_t radius,
                          int parity) {
  const std::size_t width = 2 * radius + 1;
  const double sign = parity >= 0 ? 1.0 : -1.0;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const double* src = in + i;
    float64x2_t acc;
    if (parity == 0) {
      acc = vdupq_n_f64(0.0);
      for (std::size_t k = 0; k < width; ++k) acc = vfmaq_n_f64(acc, vld1q_f64(src + k), taps[k]);
    } else {
      acc = vmulq_n_f64(vld1q_f64(src + radius), taps[radius]);
      for (std::size_t k = 0; k < radius; ++k) {
        const float64x2_t pair = parity > 0 ? vaddq_f64(vld1q_f64(src + k), vld1q_f64(src + width - 1 - k))
                                            : vsubq_f64(vld1q_f64(src + k), vld1q_f64(src + width - 1 - k));
        acc = vfmaq_n_f64(acc, pair, taps[k]);
      }
    }
    vst1q_f64(out + i, acc);
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

void structure_products_neon(const double* gs, const double* ga, double* jss, double* jsa, double* jaa,
                             std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t s = vld1q_f64(gs + i);
    const float64x2_t a = vld1q_f64(ga + i);
    vst1q_f64(jss + i, vmulq_f64(s, s));
    vst1q_f64(jsa + i, vmulq_f64(s, a));
    vst1q_f64(jaa + i, vmulq_f64(a, a));
  }
  for (; i < n; ++i) {
    jss[i] = gs[i] * gs[i];
    jsa[i] = gs[i] * ga[i];
    jaa[i] = ga[i] * ga[i];
  }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{
      Isa::kNeon,          "neon",
      &dot_neon,           &squared_distance_neon,
      &axpy_neon,          &xpby_neon,
      &reflect_update_neon, &axpy_pair_neon,
      &convolve_padded_neon,
      &structure_products_neon,
  };
  return table;
}

}  // namespace lfd::simd::detail
