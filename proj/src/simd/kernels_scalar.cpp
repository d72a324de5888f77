#include <cmath>

#include "lfdepth/simd/kernel_table.hpp"

namespace lfd::simd::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void xpby_scalar(const double* x, double beta, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + beta * y[i];
}

void reflect_update_scalar(double* y, const double* p, const double* f, const double* pk, double relax,
                           std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += relax * (2.0 * p[i] - f[i] - pk[i]);
}

void axpy_pair_scalar(double alpha, const double* a, const double* b, double sign, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * (a[i] + sign * b[i]);
}

void convolve_padded_scalar(const double* in, double* out, std::size_t n, const double* taps, std::size_t radius,
                            int parity) {
  const std::size_t width = 2 * radius + 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = in + i;
    double s = 0.0;
    if (parity == 0) {
      for (std::size_t k = 0; k < width; ++k) s += taps[k] * src[k];
    } else {
      const double sign = parity > 0 ? 1.0 : -1.0;
      s = taps[radius] * src[radius];
      for (std::size_t k = 0; k < radius; ++k) s += taps[k] * (src[k] + sign * src[width - 1 - k]);
    }
    out[i] = s;
  }
}

void structure_products_scalar(const double* gs, const double* ga, double* jss, double* jsa, double* jaa,
                               std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    jss[i] = gs[i] * gs[i];
    jsa[i] = gs[i] * ga[i];
    jaa[i] = ga[i] * ga[i];
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      Isa::kScalar,          "scalar",
      &dot_scalar,           &squared_distance_scalar,
      &axpy_scalar,          &xpby_scalar,
      &reflect_update_scalar, &axpy_pair_scalar,
      &convolve_padded_scalar,
      &structure_products_scalar,
  };
  return table;
}

}  // namespace lfd::simd::detail
