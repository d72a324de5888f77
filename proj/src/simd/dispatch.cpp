#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "lfdepth/error.hpp"
#include "lfdepth/simd/kernels.hpp"

namespace lfd::simd {
namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(LFDEPTH_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(LFDEPTH_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("LFDEPTH_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return &detail::scalar_table();
  }
  if (cpu_supports(Isa::kAvx2)) return &table_for(Isa::kAvx2);
  if (cpu_supports(Isa::kNeon)) return &table_for(Isa::kNeon);
  return &detail::scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ValidationError(std::string("simd::") + what + ": length mismatch");
}

}  // namespace

const KernelTable& table_for(Isa isa) {
  if (!cpu_supports(isa)) return detail::scalar_table();
  switch (isa) {
#if defined(LFDEPTH_HAVE_AVX2)
    case Isa::kAvx2:
      return detail::avx2_table();
#endif
#if defined(LFDEPTH_HAVE_NEON)
    case Isa::kNeon:
      return detail::neon_table();
#endif
    default:
      return detail::scalar_table();
  }
}

bool isa_available(Isa isa) { return cpu_supports(isa); }

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select_isa(Isa isa) {
  if (!cpu_supports(isa)) return false;
  current().store(&table_for(isa), std::memory_order_release);
  return true;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size(), "dot");
  return active().dot(a.data(), b.data(), a.size());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size(), "squared_distance");
  return active().squared_distance(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same(x.size(), y.size(), "axpy");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void xpby(std::span<const double> x, double beta, std::span<double> y) {
  require_same(x.size(), y.size(), "xpby");
  active().xpby(x.data(), beta, y.data(), x.size());
}

void reflect_update(std::span<double> y, std::span<const double> p, std::span<const double> f,
                    std::span<const double> pk, double relax) {
  require_same(y.size(), p.size(), "reflect_update");
  require_same(y.size(), f.size(), "reflect_update");
  require_same(y.size(), pk.size(), "reflect_update");
  active().reflect_update(y.data(), p.data(), f.data(), pk.data(), relax, y.size());
}

void axpy_pair(double alpha, std::span<const double> a, std::span<const double> b, double sign,
               std::span<double> y) {
  require_same(a.size(), y.size(), "axpy_pair");
  require_same(b.size(), y.size(), "axpy_pair");
  active().axpy_pair(alpha, a.data(), b.data(), sign, y.data(), y.size());
}

void structure_products(std::span<const double> gs, std::span<const double> ga, std::span<double> jss,
                        std::span<double> jsa, std::span<double> jaa) {
  const std::size_t n = gs.size();
  require_same(n, ga.size(), "structure_products");
  require_same(n, jss.size(), "structure_products");
  require_same(n, jsa.size(), "structure_products");
  require_same(n, jaa.size(), "structure_products");
  active().structure_products(gs.data(), ga.data(), jss.data(), jsa.data(), jaa.data(), n);
}

ExtendedSample extend(long index, std::size_t n, Boundary boundary) {
  const long len = static_cast<long>(n);
  if (index >= 0 && index < len) return {{static_cast<std::size_t>(index), 0}, {1.0, 0.0}, 1};
  if (boundary == Boundary::kSymmetric) {
    // Mirror with period 2n: ... c b a | a b c | c b a | a b c ...
    const long period = 2 * len;
    long k = index % period;
    if (k < 0) k += period;
    if (k >= len) k = period - 1 - k;
    return {{static_cast<std::size_t>(k), 0}, {1.0, 0.0}, 1};
  }
  // Odd reflection about the edge sample; the mirrored partner saturates at
  // the far end for supports longer than the signal.
  if (index < 0) {
    const long partner = std::min(-index, len - 1);
    return {{0, static_cast<std::size_t>(partner)}, {2.0, -1.0}, 2};
  }
  const long partner = std::max(2 * (len - 1) - index, 0L);
  return {{static_cast<std::size_t>(len - 1), static_cast<std::size_t>(partner)}, {2.0, -1.0}, 2};
}

int tap_parity(std::span<const double> taps) {
  const std::size_t n = taps.size();
  bool symmetric = true, antisymmetric = true;
  for (std::size_t k = 0; k < n; ++k) {
    if (taps[k] != taps[n - 1 - k]) symmetric = false;
    if (taps[k] != -taps[n - 1 - k]) antisymmetric = false;
  }
  if (symmetric) return 1;
  if (antisymmetric) return -1;
  return 0;
}

void pad(std::span<const double> in, std::size_t radius, Boundary boundary, std::span<double> padded) {
  const std::size_t n = in.size();
  require_same(padded.size(), n + 2 * radius, "pad");
  if (n == 0) throw ValidationError("simd::pad: empty signal");
  for (std::size_t i = 0; i < padded.size(); ++i) {
    const long idx = static_cast<long>(i) - static_cast<long>(radius);
    if (idx >= 0 && idx < static_cast<long>(n)) {
      padded[i] = in[static_cast<std::size_t>(idx)];
      continue;
    }
    const ExtendedSample e = extend(idx, n, boundary);
    padded[i] = e.count == 1 ? in[e.source[0]] : e.weight[0] * in[e.source[0]] + e.weight[1] * in[e.source[1]];
  }
}

void convolve(std::span<const double> in, std::span<double> out, std::span<const double> taps, Boundary boundary) {
  require_same(in.size(), out.size(), "convolve");
  if (taps.size() % 2 == 0) throw ValidationError("simd::convolve: taps must have odd length");
  const std::size_t n = in.size();
  if (n == 0) return;
  const std::size_t radius = taps.size() / 2;
  std::vector<double> padded(n + 2 * radius);
  pad(in, radius, boundary, padded);
  active().convolve_padded(padded.data(), out.data(), n, taps.data(), radius, tap_parity(taps));
}

}  // namespace lfd::simd
