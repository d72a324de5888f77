#include "lfdepth/tv.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>

#include "lfdepth/error.hpp"
#include "lfdepth/parallel.hpp"
#include "lfdepth/simd/kernels.hpp"

namespace lfd {
namespace {

constexpr std::size_t kMinChunk = 8192;
constexpr double kInsideTolerance = 1e-12;
constexpr double kResidualFloor = 1e-12;
constexpr double kMinWeight = 1e-12;

double norm2(std::span<const double> v) { return std::sqrt(simd::dot(v, v)); }

void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) throw ValidationError(fmt::format("{}: size {} does not match {}", what, got, want));
}

// Solve sum_e theta_e^2 f_e^2 / (1 + mu theta_e^2)^2 = g^2 for mu > 0; the
// left side is convex and decreasing, so Newton from mu = 0 approaches from below.
double ellipsoid_multiplier(std::span<const double> theta, std::span<const double> f, double g) {
  auto value = [&](double mu, double& slope) {
    double s = 0.0;
    slope = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      const double t2 = theta[k] * theta[k];
      const double den = 1.0 + mu * t2;
      const double term = t2 * f[k] * f[k] / (den * den);
      s += term;
      slope -= 2.0 * t2 * term / den;
    }
    return s - g * g;
  };
  double mu = 0.0;
  for (int it = 0; it < 200; ++it) {
    double slope = 0.0;
    const double h = value(mu, slope);
    if (h <= 0.0 || slope >= 0.0) break;
    const double next = mu - h / slope;
    if (!(next > mu)) break;
    if (next - mu <= 1e-15 * std::max(1.0, mu)) {
      mu = next;
      break;
    }
    mu = next;
  }
  return mu;
}

class PhiSystem {
 public:
  PhiSystem(const TVProblem& problem, int threads)
      : graph_(problem.graph),
        gamma_(problem.gamma_diagonal()),
        wc_(problem.graph.edge_count()),
        tmp_n_(static_cast<std::size_t>(problem.graph.vertex_count())),
        threads_(threads) {
    const auto c = problem.anchor();
    graph_.apply(c, wc_, threads_);
  }

  // Returns the CG iteration count; `out` holds the warm start on entry when warm is true.
  int prox(std::span<const double> f, double lam, std::span<double> out, bool warm, const CgOptions& cg) {
    const std::size_t m = graph_.edge_count();
    if (m == 0) return 0;
    if (lam != cached_lam_) {
      diag_.resize(m);
      const auto& edges = graph_.edges();
      for (std::size_t e = 0; e < m; ++e) {
        diag_[e] = 1.0 + lam * graph_.weights()[e] * (gamma_[edges[e].tail] + gamma_[edges[e].head]);
      }
      cached_lam_ = lam;
    }
    b_.assign(f.begin(), f.end());
    simd::axpy(lam, wc_, b_);
    const double b_norm = norm2(b_);
    if (!warm) std::fill(out.begin(), out.end(), 0.0);
    if (b_norm == 0.0) {
      std::fill(out.begin(), out.end(), 0.0);
      return 0;
    }
    r_.resize(m);
    z_.resize(m);
    p_.resize(m);
    ap_.resize(m);
    apply_system(lam, out, ap_);
    for (std::size_t e = 0; e < m; ++e) r_[e] = b_[e] - ap_[e];
    const double target = cg.rel_tol * b_norm;
    double r_norm = norm2(r_);
    if (r_norm <= target) return 0;
    for (std::size_t e = 0; e < m; ++e) z_[e] = r_[e] / diag_[e];
    p_ = z_;
    double rz = simd::dot(r_, z_);
    for (int k = 0; k < cg.max_iter; ++k) {
      apply_system(lam, p_, ap_);
      const double pap = simd::dot(p_, ap_);
      if (!(pap > 0.0)) break;
      const double alpha = rz / pap;
      simd::axpy(alpha, p_, out);
      simd::axpy(-alpha, ap_, r_);
      r_norm = norm2(r_);
      if (r_norm <= target) return k + 1;
      for (std::size_t e = 0; e < m; ++e) z_[e] = r_[e] / diag_[e];
      const double rz_next = simd::dot(r_, z_);
      simd::xpby(z_, rz_next / rz, p_);
      rz = rz_next;
    }
    throw NumericalError(fmt::format("prox_phi: conjugate gradient stopped after {} iterations, relative residual {:.3e}",
                                     cg.max_iter, r_norm / b_norm));
  }

 private:
  void apply_system(double lam, std::span<const double> in, std::span<double> out) {
    graph_.apply_transpose(in, tmp_n_, threads_);
    for (std::size_t i = 0; i < tmp_n_.size(); ++i) tmp_n_[i] *= gamma_[i];
    graph_.apply(tmp_n_, out, threads_);
    simd::xpby(in, lam, out);
  }

  const PixelGraph& graph_;
  std::vector<double> gamma_;
  std::vector<double> wc_;
  std::vector<double> tmp_n_;
  std::vector<double> diag_, b_, r_, z_, p_, ap_;
  double cached_lam_ = std::numeric_limits<double>::quiet_NaN();
  int threads_;
};

}  // namespace

PixelGraph::PixelGraph(int vertex_count, std::vector<Edge> edges, std::vector<double> weights)
    : n_(vertex_count), edges_(std::move(edges)), weights_(std::move(weights)) {
  if (n_ < 1) throw ValidationError("graph: needs at least one vertex");
  require_size(weights_.size(), edges_.size(), "graph weights");
  std::set<std::pair<int, int>> seen;
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const Edge& edge = edges_[e];
    if (edge.tail < 0 || edge.tail >= n_ || edge.head < 0 || edge.head >= n_) {
      throw ValidationError(fmt::format("graph: edge {} references a vertex outside [0, {})", e, n_));
    }
    if (edge.tail == edge.head) throw ValidationError(fmt::format("graph: edge {} is a self-loop", e));
    if (!seen.emplace(std::min(edge.tail, edge.head), std::max(edge.tail, edge.head)).second) {
      throw ValidationError(fmt::format("graph: edge {} duplicates an earlier edge", e));
    }
    if (!(weights_[e] > 0.0) || !std::isfinite(weights_[e])) {
      throw ValidationError(fmt::format("graph: edge {} weight must be positive and finite", e));
    }
  }
  sqrt_w_.resize(weights_.size());
  for (std::size_t e = 0; e < weights_.size(); ++e) sqrt_w_[e] = std::sqrt(weights_[e]);
  offsets_.assign(static_cast<std::size_t>(n_) + 1, 0);
  for (const Edge& edge : edges_) {
    ++offsets_[edge.tail + 1];
    ++offsets_[edge.head + 1];
  }
  for (int i = 0; i < n_; ++i) offsets_[i + 1] += offsets_[i];
  incident_.resize(offsets_[n_]);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    incident_[fill[edges_[e].tail]++] = static_cast<int>(e);
    incident_[fill[edges_[e].head]++] = static_cast<int>(e);
  }
}

void PixelGraph::apply(std::span<const double> x, std::span<double> out, int threads) const {
  require_size(x.size(), static_cast<std::size_t>(n_), "W x input");
  require_size(out.size(), edges_.size(), "W x output");
  parallel_for(
      edges_.size(), threads,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t e = begin; e < end; ++e) out[e] = sqrt_w_[e] * (x[edges_[e].head] - x[edges_[e].tail]);
      },
      kMinChunk);
}

void PixelGraph::apply_transpose(std::span<const double> f, std::span<double> out, int threads) const {
  require_size(f.size(), edges_.size(), "W' F input");
  require_size(out.size(), static_cast<std::size_t>(n_), "W' F output");
  parallel_for(
      static_cast<std::size_t>(n_), threads,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          double s = 0.0;
          for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) {
            const int e = incident_[k];
            const double v = sqrt_w_[e] * f[e];
            s += edges_[e].head == static_cast<int>(i) ? v : -v;
          }
          out[i] = s;
        }
      },
      kMinChunk);
}

PixelGraph build_grid_graph(int width, int height, const Grid2D<double>* guide, double beta) {
  if (width < 1 || height < 1) throw ValidationError("build_grid_graph: dimensions must be positive");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ValidationError("build_grid_graph: beta must be >= 0");
  if (guide && (guide->width() != width || guide->height() != height)) {
    throw ValidationError(fmt::format("build_grid_graph: guide is {}x{}, expected {}x{}", guide->width(),
                                      guide->height(), width, height));
  }
  std::vector<Edge> edges;
  std::vector<double> weights;
  edges.reserve(2 * static_cast<std::size_t>(width) * height);
  weights.reserve(edges.capacity());
  auto weight = [&](int p, int q) {
    if (!guide || beta == 0.0) return 1.0;
    const double diff = guide->values()[p] - guide->values()[q];
    return std::max(std::exp(-beta * diff * diff), kMinWeight);
  };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int p = y * width + x;
      if (x + 1 < width) {
        edges.push_back({p, p + 1});
        weights.push_back(weight(p, p + 1));
      }
      if (y + 1 < height) {
        edges.push_back({p, p + width});
        weights.push_back(weight(p, p + width));
      }
    }
  }
  PixelGraph graph(width * height, std::move(edges), std::move(weights));
  graph.grid_width_ = width;
  graph.grid_height_ = height;
  return graph;
}

PixelGraph build_grid_graph(int width, int height, const Grid2D<double>& guide, double beta) {
  return build_grid_graph(width, height, &guide, beta);
}

ConstraintSet ConstraintSet::incident_indicator(const PixelGraph& graph, NormOrder alpha, std::vector<double> bounds) {
  ConstraintSet set;
  set.alpha = alpha;
  set.bounds = std::move(bounds);
  set.theta.assign(graph.incidence_size(), 1.0);
  set.validate(graph);
  return set;
}

void ConstraintSet::validate(const PixelGraph& graph) const {
  require_size(bounds.size(), static_cast<std::size_t>(graph.vertex_count()), "constraint bounds");
  require_size(theta.size(), graph.incidence_size(), "constraint theta");
  for (double g : bounds) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw ValidationError("constraints: bounds must be finite and >= 0");
  }
  for (double t : theta) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("constraints: theta must be finite and >= 0");
  }
}

void project_onto_Bq(std::span<double> f, int q, const PixelGraph& graph, const ConstraintSet& constraints) {
  const auto inc = graph.incident(q);
  const std::size_t off = graph.incident_offset(q);
  const double g = constraints.bounds[q];
  const double* theta = constraints.theta.data() + off;

  if (constraints.alpha == NormOrder::kInfinity) {
    for (std::size_t k = 0; k < inc.size(); ++k) {
      if (theta[k] == 0.0) continue;
      double& v = f[inc[k]];
      if (g == 0.0) {
        v = 0.0;
        continue;
      }
      const double bound = g / theta[k];
      v = std::clamp(v, -bound, bound);
    }
    return;
  }

  double s2 = 0.0;
  bool uniform = true;
  double t0 = 0.0;
  for (std::size_t k = 0; k < inc.size(); ++k) {
    if (theta[k] == 0.0) continue;
    const double tv = theta[k] * f[inc[k]];
    s2 += tv * tv;
    if (t0 == 0.0) t0 = theta[k];
    else if (theta[k] != t0) uniform = false;
  }
  if (g == 0.0) {
    for (std::size_t k = 0; k < inc.size(); ++k) {
      if (theta[k] != 0.0) f[inc[k]] = 0.0;
    }
    return;
  }
  if (s2 <= g * g * (1.0 + kInsideTolerance)) return;
  if (uniform) {
    const double scale = g / std::sqrt(s2);
    for (std::size_t k = 0; k < inc.size(); ++k) {
      if (theta[k] != 0.0) f[inc[k]] *= scale;
    }
    return;
  }
  std::vector<double> th, fv;
  for (std::size_t k = 0; k < inc.size(); ++k) {
    if (theta[k] == 0.0) continue;
    th.push_back(theta[k]);
    fv.push_back(f[inc[k]]);
  }
  const double mu = ellipsoid_multiplier(th, fv, g);
  double after = 0.0;
  for (std::size_t k = 0, j = 0; k < inc.size(); ++k) {
    if (theta[k] == 0.0) continue;
    const double v = fv[j] / (1.0 + mu * th[j] * th[j]);
    f[inc[k]] = v;
    after += th[j] * th[j] * v * v;
    ++j;
  }
  // Newton stops just short of the boundary; pull any leftover excess in radially.
  if (after > g * g) {
    const double scale = g / std::sqrt(after);
    for (std::size_t k = 0; k < inc.size(); ++k) {
      if (theta[k] != 0.0) f[inc[k]] *= scale;
    }
  }
}

std::vector<double> project_onto_Bq(const std::vector<double>& f, int q, const PixelGraph& graph,
                                    const ConstraintSet& constraints) {
  require_size(f.size(), graph.edge_count(), "project_onto_Bq");
  if (q < 0 || q >= graph.vertex_count()) throw ValidationError("project_onto_Bq: vertex out of range");
  std::vector<double> out = f;
  project_onto_Bq(std::span<double>(out), q, graph, constraints);
  return out;
}

double support_function(std::span<const double> a, const PixelGraph& graph, const ConstraintSet& constraints,
                        SupportState* state) {
  require_size(a.size(), graph.edge_count(), "support_function");
  const auto& edges = graph.edges();
  const std::size_t m = edges.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // theta of edge e as seen from its tail and head
  std::vector<double> theta_tail(m, 0.0), theta_head(m, 0.0);
  for (int i = 0; i < graph.vertex_count(); ++i) {
    const auto inc = graph.incident(i);
    const std::size_t off = graph.incident_offset(i);
    for (std::size_t k = 0; k < inc.size(); ++k) {
      const int e = inc[k];
      (edges[e].tail == i ? theta_tail : theta_head)[e] = constraints.theta[off + k];
    }
  }

  if (constraints.alpha == NormOrder::kInfinity) {
    double q = 0.0;
    for (std::size_t e = 0; e < m; ++e) {
      if (a[e] == 0.0) continue;
      double bound = kInf;
      if (theta_tail[e] > 0.0) bound = std::min(bound, constraints.bounds[edges[e].tail] / theta_tail[e]);
      if (theta_head[e] > 0.0) bound = std::min(bound, constraints.bounds[edges[e].head] / theta_head[e]);
      if (bound == kInf) return kInf;
      q += std::abs(a[e]) * bound;
    }
    return q;
  }

  // Split a_e = t_e + (a_e - t_e) between tail and head; vertex i pays
  // G_i || b_i / theta^i ||. Reweighted least squares on that splitting.
  const int n = graph.vertex_count();
  std::vector<double> t(m);
  for (std::size_t e = 0; e < m; ++e) {
    const bool tail_ok = theta_tail[e] > 0.0, head_ok = theta_head[e] > 0.0;
    if (!tail_ok && !head_ok) {
      if (a[e] != 0.0) return kInf;
      t[e] = 0.0;
    } else if (!head_ok) {
      t[e] = a[e];
    } else if (!tail_ok) {
      t[e] = 0.0;
    } else if (state && state->tail_share.size() == m) {
      t[e] = state->tail_share[e] * a[e];
    } else {
      t[e] = 0.5 * a[e];
    }
  }
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  const double eps = 1e-12 * scale;

  std::vector<double> norms(n);
  auto evaluate = [&]() {
    std::fill(norms.begin(), norms.end(), 0.0);
    for (std::size_t e = 0; e < m; ++e) {
      if (theta_tail[e] > 0.0) {
        const double v = t[e] / theta_tail[e];
        norms[edges[e].tail] += v * v;
      }
      if (theta_head[e] > 0.0) {
        const double v = (a[e] - t[e]) / theta_head[e];
        norms[edges[e].head] += v * v;
      }
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      norms[i] = std::sqrt(norms[i]);
      total += constraints.bounds[i] * norms[i];
    }
    return total;
  };

  // The objective is smooth except where a vertex's share vanishes, and the
  // reweighting only creeps towards such points. Hand small shares over to the
  // neighbours outright when that lowers the cost.
  auto snap = [&]() {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      if (norms[i] == 0.0) continue;
      const auto inc = graph.incident(i);
      double edge_scale = 0.0;
      for (int e : inc) edge_scale += a[e] * a[e];
      if (norms[i] > 0.1 * std::sqrt(edge_scale)) continue;
      double delta = -constraints.bounds[i] * norms[i];
      bool possible = true;
      for (int e : inc) {
        const bool is_tail = edges[e].tail == i;
        const int j = is_tail ? edges[e].head : edges[e].tail;
        const double th_j = is_tail ? theta_head[e] : theta_tail[e];
        const double mine = is_tail ? t[e] : a[e] - t[e];
        if (mine == 0.0) continue;
        if (!(th_j > 0.0)) {
          possible = false;
          break;
        }
        const double old_j = (is_tail ? a[e] - t[e] : t[e]) / th_j;
        const double new_j = a[e] / th_j;
        const double nj2 = std::max(0.0, norms[j] * norms[j] - old_j * old_j + new_j * new_j);
        delta += constraints.bounds[j] * (std::sqrt(nj2) - norms[j]);
      }
      if (!possible || !(delta < 0.0)) continue;
      for (int e : inc) {
        const bool is_tail = edges[e].tail == i;
        const int j = is_tail ? edges[e].head : edges[e].tail;
        const double th_j = is_tail ? theta_head[e] : theta_tail[e];
        const double mine = is_tail ? t[e] : a[e] - t[e];
        if (mine == 0.0) continue;
        const double old_j = (is_tail ? a[e] - t[e] : t[e]) / th_j;
        const double new_j = a[e] / th_j;
        norms[j] = std::sqrt(std::max(0.0, norms[j] * norms[j] - old_j * old_j + new_j * new_j));
        t[e] = is_tail ? 0.0 : a[e];
      }
      norms[i] = 0.0;
      changed = true;
    }
    return changed;
  };

  double best = evaluate();
  std::vector<double> best_t = t;
  const int max_iter = state ? state->max_iter : 2000;
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t e = 0; e < m; ++e) {
      if (!(theta_tail[e] > 0.0 && theta_head[e] > 0.0)) continue;
      const int i = edges[e].tail, j = edges[e].head;
      const double ki = constraints.bounds[i] / std::max(norms[i], eps) / (theta_tail[e] * theta_tail[e]);
      const double kj = constraints.bounds[j] / std::max(norms[j], eps) / (theta_head[e] * theta_head[e]);
      t[e] = ki + kj > 0.0 ? a[e] * kj / (ki + kj) : 0.5 * a[e];
    }
    double value = evaluate();
    const bool improved = value < best;
    const bool stalled = !improved || best - value <= 1e-13 * best;
    if (improved) {
      best = value;
      best_t = t;
    } else {
      t = best_t;
      evaluate();
    }
    if (stalled || it % 25 == 24 || it + 1 == max_iter) {
      if (snap()) {
        value = evaluate();
        if (value < best) {
          best = value;
          best_t = t;
          continue;
        }
        t = best_t;
        evaluate();
      }
      if (stalled) break;
    }
  }
  if (state) {
    state->tail_share.resize(m);
    for (std::size_t e = 0; e < m; ++e) state->tail_share[e] = a[e] != 0.0 ? best_t[e] / a[e] : 0.5;
  }
  return best;
}

void TVProblem::validate() const {
  const std::size_t n = static_cast<std::size_t>(graph.vertex_count());
  require_size(d_obs.size(), n, "TV problem d_obs");
  require_size(fidelity.size(), n, "TV problem fidelity");
  if (!measurement.empty()) require_size(measurement.size(), n, "TV problem measurement");
  for (double d : d_obs) {
    if (!std::isfinite(d)) throw ValidationError("TV problem: d_obs must be finite");
  }
  for (double v : fidelity) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("TV problem: fidelity must be positive and finite");
  }
  for (double mi : measurement) {
    if (!std::isfinite(mi)) throw ValidationError("TV problem: measurement must be finite");
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ValidationError("TV problem: gamma must be positive");
  constraints.validate(graph);
}

std::vector<double> TVProblem::gamma_diagonal() const {
  std::vector<double> g(d_obs.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double mi = measurement_at(i);
    g[i] = mi == 1.0 ? fidelity[i] : 1.0 / (mi * mi / fidelity[i] + (mi == 0.0 ? gamma : 0.0));
  }
  return g;
}

std::vector<double> TVProblem::anchor() const {
  const auto g = gamma_diagonal();
  std::vector<double> c(d_obs.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double mi = measurement_at(i);
    c[i] = mi == 1.0 ? d_obs[i] : g[i] * mi * d_obs[i] / fidelity[i];
  }
  return c;
}

std::vector<double> prox_phi(const std::vector<double>& f, double lam, const TVProblem& problem, const CgOptions& cg,
                             const std::vector<double>* warm_start) {
  problem.validate();
  require_size(f.size(), problem.graph.edge_count(), "prox_phi");
  if (!(lam > 0.0) || !std::isfinite(lam)) throw ValidationError("prox_phi: lam must be positive");
  PhiSystem system(problem, 1);
  std::vector<double> out(f.size(), 0.0);
  if (warm_start) {
    require_size(warm_start->size(), f.size(), "prox_phi warm start");
    out = *warm_start;
  }
  system.prox(f, lam, out, warm_start != nullptr, cg);
  return out;
}

void PpxaParams::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("ppxa: lambda must be positive");
  if (!(relax > 0.0 && relax < 2.0)) throw ValidationError("ppxa: relax must lie in (0, 2)");
  if (max_iter < 0) throw ValidationError("ppxa: max_iter must be >= 0");
  if (!(stop_tol >= 0.0)) throw ValidationError("ppxa: stop_tol must be >= 0");
  if (!(cg.rel_tol > 0.0) || cg.max_iter < 1) throw ValidationError("ppxa: invalid CG options");
}

std::vector<int> vertex_coloring(const PixelGraph& graph) {
  const int n = graph.vertex_count();
  std::vector<int> color(n, -1);
  if (graph.grid_width() > 0) {
    const int w = graph.grid_width();
    for (int i = 0; i < n; ++i) color[i] = (i % w + i / w) % 2;
    return color;
  }
  std::vector<char> used;
  for (int i = 0; i < n; ++i) {
    used.assign(graph.incident(i).size() + 1, 0);
    for (int e : graph.incident(i)) {
      const Edge& edge = graph.edges()[e];
      const int other = edge.tail == i ? edge.head : edge.tail;
      if (color[other] >= 0 && color[other] < static_cast<int>(used.size())) used[color[other]] = 1;
    }
    int c = 0;
    while (used[c]) ++c;
    color[i] = c;
  }
  return color;
}

PpxaResult ppxa_solve(const TVProblem& problem, const PpxaParams& params) {
  problem.validate();
  params.validate();
  const PixelGraph& graph = problem.graph;
  const std::size_t m = graph.edge_count();
  PpxaResult result;
  result.dual.assign(m, 0.0);
  if (m == 0) {
    result.trace.converged = true;
    return result;
  }

  const auto color = vertex_coloring(graph);
  const int classes = *std::max_element(color.begin(), color.end()) + 1;
  std::vector<std::vector<int>> members(classes);
  for (int i = 0; i < graph.vertex_count(); ++i) members[color[i]].push_back(i);
  const int blocks = classes + 1;
  const double weight = 1.0 / blocks;
  result.trace.blocks = blocks;

  PhiSystem phi(problem, params.threads);
  std::vector<std::vector<double>> y(blocks, std::vector<double>(m, 0.0));
  std::vector<std::vector<double>> p(blocks, std::vector<double>(m, 0.0));
  std::vector<double>& f = result.dual;
  std::vector<double> avg(m), step(m);
  bool phi_warm = false;
  SupportState support_state;
  support_state.max_iter = 10;

  // sqrt(sum_q ||P_{B_q} F - F||^2); vertices of one class touch disjoint edges.
  std::vector<double> scratch(m);
  auto feasibility_gap = [&](const std::vector<double>& current) {
    double total = 0.0;
    for (int k = 0; k < classes; ++k) {
      scratch = current;
      for (int q : members[k]) project_onto_Bq(std::span<double>(scratch), q, graph, problem.constraints);
      total += simd::squared_distance(scratch, current);
    }
    return std::sqrt(total);
  };

  for (int it = 0; it < params.max_iter; ++it) {
    for (int k = 0; k < classes; ++k) {
      p[k] = y[k];
      std::span<double> pk(p[k]);
      const auto& verts = members[k];
      parallel_for(
          verts.size(), params.threads,
          [&](std::size_t begin, std::size_t end) {
            for (std::size_t v = begin; v < end; ++v) project_onto_Bq(pk, verts[v], graph, problem.constraints);
          },
          kMinChunk / 4);
    }
    result.trace.cg_iterations += phi.prox(y[classes], params.lambda / weight, p[classes], phi_warm, params.cg);
    phi_warm = true;

    std::fill(avg.begin(), avg.end(), 0.0);
    for (int k = 0; k < blocks; ++k) simd::axpy(weight, p[k], avg);
    for (int k = 0; k < blocks; ++k) simd::reflect_update(y[k], avg, f, p[k], params.relax);

    for (std::size_t e = 0; e < m; ++e) step[e] = params.relax * (avg[e] - f[e]);
    const double f_norm = norm2(f);
    const double residual = norm2(step) / std::max(f_norm, kResidualFloor);
    simd::axpy(1.0, step, f);

    result.trace.residual_norms.push_back(residual);
    result.trace.iterations_run = it + 1;
    if (params.record_objective) {
      const auto x = recover_primal(f, problem);
      result.trace.primal_objective.push_back(primal_objective(x, problem, &support_state));
    }
    if (!std::isfinite(residual)) throw NumericalError(fmt::format("ppxa: residual became non-finite at iteration {}", it + 1));
    if (residual < params.stop_tol && feasibility_gap(f) <= params.stop_tol * norm2(f)) {
      result.trace.converged = true;
      break;
    }
  }
  return result;
}

std::vector<double> recover_primal(std::span<const double> dual, const TVProblem& problem) {
  require_size(dual.size(), problem.graph.edge_count(), "recover_primal");
  const auto c = problem.anchor();
  const auto g = problem.gamma_diagonal();
  std::vector<double> wtf(c.size());
  problem.graph.apply_transpose(dual, wtf);
  std::vector<double> x(c.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = c[i] - g[i] * wtf[i];
  return x;
}

double primal_objective(std::span<const double> x, const TVProblem& problem, SupportState* state) {
  require_size(x.size(), static_cast<std::size_t>(problem.graph.vertex_count()), "primal_objective");
  std::vector<double> wx(problem.graph.edge_count());
  problem.graph.apply(x, wx);
  double value = support_function(wx, problem.graph, problem.constraints, state);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mi = problem.measurement_at(i);
    const double r = mi * x[i] - problem.d_obs[i];
    value += 0.5 * r * r / problem.fidelity[i];
    if (mi == 0.0) value += 0.5 * problem.gamma * x[i] * x[i];
  }
  return value;
}

void RefineParams::validate() const {
  PpxaParams p;
  p.lambda = lambda;
  p.max_iter = max_iter;
  p.relax = relax;
  p.stop_tol = stop_tol;
  p.validate();
  if (!(nu > 0.0) || !std::isfinite(nu)) throw ValidationError("refine: nu must be positive");
  if (!(g0 >= 0.0) || !std::isfinite(g0)) throw ValidationError("refine: g0 must be >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ValidationError("refine: beta must be >= 0");
  if (!(min_confidence > 0.0 && min_confidence <= 1.0)) {
    throw ValidationError("refine: min_confidence must lie in (0, 1]");
  }
}

std::vector<double> guide_bounds(const Grid2D<double>& guide, double g0) {
  const int w = guide.width(), h = guide.height();
  std::vector<double> bounds(guide.size());
  auto diff = [](double a, double b, int span) { return span > 0 ? (a - b) / span : 0.0; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(x - 1, 0), x1 = std::min(x + 1, w - 1);
      const int y0 = std::max(y - 1, 0), y1 = std::min(y + 1, h - 1);
      const double gx = diff(guide(x1, y), guide(x0, y), x1 - x0);
      const double gy = diff(guide(x, y1), guide(x, y0), y1 - y0);
      const double mag = std::clamp(std::sqrt(gx * gx + gy * gy), 0.0, 1.0);
      bounds[static_cast<std::size_t>(y) * w + x] = g0 * (1.0 - mag);
    }
  }
  return bounds;
}

TVProblem make_refine_problem(const DisparityField& initial, const Grid2D<double>& guide, const RefineParams& params) {
  params.validate();
  if (initial.width() != guide.width() || initial.height() != guide.height()) {
    throw ValidationError(fmt::format("refine: disparity is {}x{} but guide is {}x{}", initial.width(),
                                      initial.height(), guide.width(), guide.height()));
  }
  TVProblem problem;
  problem.graph = build_grid_graph(guide.width(), guide.height(), guide, params.beta);
  problem.constraints =
      ConstraintSet::incident_indicator(problem.graph, params.alpha, guide_bounds(guide, params.g0));
  const std::size_t n = initial.disparity.size();
  problem.d_obs.resize(n);
  problem.fidelity.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = initial.disparity.values()[i];
    const double conf = initial.confidence.values()[i];
    const bool finite = std::isfinite(d);
    problem.d_obs[i] = finite ? d : 0.0;
    const double c = finite && std::isfinite(conf) ? conf : 0.0;
    problem.fidelity[i] = params.nu / std::max(c, params.min_confidence);
  }
  return problem;
}

RefineResult refine_disparity(const DisparityField& initial, const Grid2D<double>& guide, const RefineParams& params) {
  const TVProblem problem = make_refine_problem(initial, guide, params);
  PpxaParams pp;
  pp.lambda = params.lambda;
  pp.max_iter = params.max_iter;
  pp.relax = params.relax;
  pp.stop_tol = params.stop_tol;
  pp.record_objective = params.record_objective;
  pp.threads = params.threads;
  PpxaResult solved = ppxa_solve(problem, pp);
  const auto x = recover_primal(solved.dual, problem);

  RefineResult result;
  result.field = initial;
  for (std::size_t i = 0; i < x.size(); ++i) result.field.disparity.values()[i] = static_cast<float>(x[i]);
  result.trace = std::move(solved.trace);
  return result;
}

}  // namespace lfd
