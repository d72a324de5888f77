#pragma once

// Data-parallel inner loops used by the filters and the proximal solver.
//
// Every kernel has a portable scalar reference implementation. Vector
// variants (AVX2+FMA on x86-64, NEON on AArch64) are compiled into separate
// translation units and chosen once at startup from the CPU feature bits.
// LFDEPTH_SIMD=scalar in the environment (or select_isa) forces the reference
// path. Vector variants agree with the reference to rounding, not bitwise:
// reductions are reassociated and multiply-adds are fused.

#include <cstddef>
#include <span>
#include <string_view>

#include "lfdepth/simd/kernel_table.hpp"

namespace lfd::simd {

/// Kernel table for the given ISA; the scalar table for ISAs not built or not
/// supported by this CPU.
const KernelTable& table_for(Isa isa);

/// True when `isa` was compiled in and the running CPU supports it.
bool isa_available(Isa isa);

/// Table currently in use by the free functions below.
const KernelTable& active();

/// Switches the active table. Returns false (leaving the selection unchanged)
/// when `isa` is unavailable.
bool select_isa(Isa isa);

std::string_view isa_name(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void xpby(std::span<const double> x, double beta, std::span<double> y);
void reflect_update(std::span<double> y, std::span<const double> p, std::span<const double> f,
                    std::span<const double> pk, double relax);
void axpy_pair(double alpha, std::span<const double> a, std::span<const double> b, double sign,
               std::span<double> y);
void structure_products(std::span<const double> gs, std::span<const double> ga, std::span<double> jss,
                        std::span<double> jsa, std::span<double> jaa);

/// +1 for symmetric taps, -1 for antisymmetric, 0 otherwise (exact comparison).
int tap_parity(std::span<const double> taps);

/// 1D correlation out[i] = sum_k taps[k] * f(i + k - radius) with f extended
/// past both ends according to `boundary`. taps.size() must be odd.
void convolve(std::span<const double> in, std::span<double> out, std::span<const double> taps, Boundary boundary);

/// Copies `in` into a buffer of length n + 2 radius with extended margins.
void pad(std::span<const double> in, std::size_t radius, Boundary boundary, std::span<double> padded);

/// Index-and-weight expansion of sample `index` under `boundary` for a signal of
/// length n: the value at `index` equals sum of weight * f(source).
struct ExtendedSample {
  std::size_t source[2];
  double weight[2];
  int count;
};
ExtendedSample extend(long index, std::size_t n, Boundary boundary);
}  // namespace lfd::simd
