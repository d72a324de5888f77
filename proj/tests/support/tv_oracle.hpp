#pragma once

// Independent reference computations for the TV solver: dense operators,
// closed-form support functions on tiny graphs, exhaustive primal search.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "lfdepth/tv.hpp"

namespace lfd::testing {

struct SmallGraph {
  int n = 0;
  std::vector<lfd::Edge> edges;
  std::vector<double> weights;
};

/// Dense W, row e: -sqrt(w) at tail, +sqrt(w) at head.
inline std::vector<std::vector<double>> dense_incidence(const SmallGraph& g) {
  std::vector<std::vector<double>> w(g.edges.size(), std::vector<double>(g.n, 0.0));
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    w[e][g.edges[e].tail] = -std::sqrt(g.weights[e]);
    w[e][g.edges[e].head] = std::sqrt(g.weights[e]);
  }
  return w;
}

/// q_B for theta = 1 on incident edges and alpha = infinity: each edge is
/// bounded by its tighter endpoint.
inline double support_inf(const SmallGraph& g, const std::vector<double>& bounds, const std::vector<double>& a) {
  double q = 0.0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    q += std::abs(a[e]) * std::min(bounds[g.edges[e].tail], bounds[g.edges[e].head]);
  }
  return q;
}

/// q_B for alpha = 2, theta = 1, on a path with one or two edges (edge k joins
/// vertices k and k + 1). The maximum of a linear function over the box-disk
/// intersection is attained at one of its extreme points.
inline double support_l2_path(const std::vector<double>& bounds, const std::vector<double>& a) {
  if (a.size() == 1) return std::min(bounds[0], bounds[1]) * std::abs(a[0]);
  const double b1 = bounds[0], b2 = bounds[2], r = bounds[1];
  std::vector<std::pair<double, double>> pts;
  const double an = std::hypot(a[0], a[1]);
  if (an > 0.0) pts.emplace_back(r * a[0] / an, r * a[1] / an);
  for (double s1 : {-1.0, 1.0}) {
    for (double s2 : {-1.0, 1.0}) {
      pts.emplace_back(s1 * b1, s2 * b2);
      if (r >= b1) pts.emplace_back(s1 * b1, s2 * std::sqrt(r * r - b1 * b1));
      if (r >= b2) pts.emplace_back(s1 * std::sqrt(r * r - b2 * b2), s2 * b2);
    }
  }
  pts.emplace_back(0.0, 0.0);
  double best = 0.0;
  for (auto [f1, f2] : pts) {
    const double tol = 1e-12;
    if (std::abs(f1) > b1 + tol || std::abs(f2) > b2 + tol || f1 * f1 + f2 * f2 > r * r * (1 + tol) + tol) continue;
    best = std::max(best, a[0] * f1 + a[1] * f2);
  }
  return best;
}

/// Primal objective with identity measurement and a caller-supplied support function.
inline double primal_value(const SmallGraph& g, const std::vector<double>& x, const std::vector<double>& d,
                           const std::vector<double>& fidelity,
                           const std::function<double(const std::vector<double>&)>& support) {
  std::vector<double> a(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    a[e] = std::sqrt(g.weights[e]) * (x[g.edges[e].head] - x[g.edges[e].tail]);
  }
  double v = support(a);
  for (int i = 0; i < g.n; ++i) v += 0.5 * (x[i] - d[i]) * (x[i] - d[i]) / fidelity[i];
  return v;
}

struct GridSearchResult {
  std::vector<double> argmin;
  double value = std::numeric_limits<double>::infinity();
};

/// Minimizes a convex function over the box [lo, hi]^n by successive grid
/// refinement down to `final_step`: every level scans `points` values per axis
/// around the incumbent, then narrows the window to a few cells.
inline GridSearchResult grid_search(const std::function<double(const std::vector<double>&)>& f, int n, double lo,
                                    double hi, double final_step, int points) {
  std::vector<double> center(n, 0.5 * (lo + hi));
  double half = 0.5 * (hi - lo);
  GridSearchResult best;
  std::vector<double> x(n);
  while (true) {
    const double step = 2.0 * half / (points - 1);
    std::vector<int> idx(n, 0);
    std::vector<double> level_best = center;
    double level_value = std::numeric_limits<double>::infinity();
    while (true) {
      for (int k = 0; k < n; ++k) x[k] = std::clamp(center[k] - half + idx[k] * step, lo, hi);
      const double v = f(x);
      if (v < level_value) {
        level_value = v;
        level_best = x;
      }
      int k = 0;
      while (k < n && ++idx[k] == points) idx[k++] = 0;
      if (k == n) break;
    }
    if (level_value < best.value) {
      best.value = level_value;
      best.argmin = level_best;
    }
    if (step <= final_step) break;
    center = best.argmin;
    half = std::max(3.0 * step, final_step * (points - 1) / 2.0);
  }
  return best;
}

}  // namespace lfd::testing
