#pragma once

// Function-pointer table shared by the scalar and vector kernel translation
// units. Kept free of standard-library headers so the ISA-specific objects
// do not emit inline library code compiled for wider instruction sets.

#include <cstddef>

namespace lfd::simd {

enum class Isa { kScalar, kAvx2, kNeon };

/// How samples outside [0, n) are synthesized by the 1D filters.
enum class Boundary {
  kSymmetric,       // f(-1-k) = f(k): mirror with the edge sample repeated
  kPointSymmetric,  // f(-k) = 2 f(0) - f(k): odd extension, exact on linear ramps
};

struct KernelTable {
  Isa isa;
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = x + beta * y
  void (*xpby)(const double* x, double beta, double* y, std::size_t n);
  // y += relax * (2 p - f - pk); the PPXA per-block reflection step
  void (*reflect_update)(double* y, const double* p, const double* f, const double* pk, double relax, std::size_t n);
  // y += alpha * (a + sign * b); sign is +1 or -1
  void (*axpy_pair)(double alpha, const double* a, const double* b, double sign, double* y, std::size_t n);
  // out[i] = sum_k taps[k] * in[i + k] for i in [0, n), reading in[0, n + 2 radius).
  // parity +1/-1 declares symmetric/antisymmetric taps; the sum is then taken
  // over mirrored pairs so antisymmetric filters return exact zeros on
  // constant input. parity 0 is the plain sum.
  void (*convolve_padded)(const double* in, double* out, std::size_t n, const double* taps, std::size_t radius,
                          int parity);
  // jss = gs^2, jsa = gs*ga, jaa = ga^2
  void (*structure_products)(const double* gs, const double* ga, double* jss, double* jsa, double* jaa, std::size_t n);
};

namespace detail {
const KernelTable& scalar_table();
#if defined(LFDEPTH_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(LFDEPTH_HAVE_NEON)
const KernelTable& neon_table();
#endif
}  // namespace detail

}  // namespace lfd::simd
