#pragma once

// Total-variation refinement of a disparity map, solved in the dual.
//
// Primal:  min_x  q_B(W x) + 1/2 sum_i (m_i x_i - d_i)^2 / V_i + gamma/2 sum_i z_i x_i^2
// Dual:    min_F  phi(F) + sum_k iota_{C_k}(F),
//          phi(F) = 1/2 F' W Gamma W' F - F' W c,
// with Gamma_i = 1 / (m_i^2 / V_i + gamma z_i), c = Gamma M V^-1 d and
// z_i = 1 where m_i = 0. The primal optimum is x = c - Gamma W' F.

#include <cstddef>
#include <span>
#include <vector>

#include "lfdepth/grid.hpp"
#include "lfdepth/lightfield.hpp"

namespace lfd {

struct Edge {
  int tail = 0;
  int head = 0;
};

/// Weighted graph with the signed incidence operator (W x)_e = sqrt(w_e) (x_head - x_tail).
class PixelGraph {
 public:
  PixelGraph() = default;
  PixelGraph(int vertex_count, std::vector<Edge> edges, std::vector<double> weights);

  int vertex_count() const noexcept { return n_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& sqrt_weights() const noexcept { return sqrt_w_; }

  /// Edge indices incident to vertex i.
  std::span<const int> incident(int i) const {
    return {incident_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  /// Start of vertex i's slice in the flattened incidence lists.
  std::size_t incident_offset(int i) const { return offsets_[i]; }
  std::size_t incidence_size() const noexcept { return incident_.size(); }

  /// Grid dimensions when built by build_grid_graph, else 0.
  int grid_width() const noexcept { return grid_width_; }
  int grid_height() const noexcept { return grid_height_; }

  void apply(std::span<const double> x, std::span<double> out, int threads = 1) const;
  void apply_transpose(std::span<const double> f, std::span<double> out, int threads = 1) const;

 private:
  friend PixelGraph build_grid_graph(int, int, const Grid2D<double>*, double);

  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<double> weights_;
  std::vector<double> sqrt_w_;
  std::vector<std::size_t> offsets_;
  std::vector<int> incident_;
  int grid_width_ = 0;
  int grid_height_ = 0;
};

/// 4-connected grid, vertex index y * width + x, edges (p, right) then (p, down)
/// per pixel. Weights exp(-beta (I_p - I_q)^2) from the guide; a null guide or
/// beta = 0 gives unit weights. Weights are floored at 1e-12.
PixelGraph build_grid_graph(int width, int height, const Grid2D<double>* guide, double beta);
PixelGraph build_grid_graph(int width, int height, const Grid2D<double>& guide, double beta);

enum class NormOrder { kTwo, kInfinity };

/// B = intersection over vertices i of { F : || theta^i . F ||_alpha <= G_i }.
/// theta^i is stored on vertex i's incident edges, aligned with the graph's
/// flattened incidence lists; entries off the incident set are zero. A zero
/// theta entry leaves that edge unconstrained by vertex i.
struct ConstraintSet {
  NormOrder alpha = NormOrder::kTwo;
  std::vector<double> bounds;
  std::vector<double> theta;

  /// theta = 1 on every incident edge.
  static ConstraintSet incident_indicator(const PixelGraph& graph, NormOrder alpha, std::vector<double> bounds);
  void validate(const PixelGraph& graph) const;
};

/// Euclidean projection onto B_q; only vertex q's incident entries change.
void project_onto_Bq(std::span<double> f, int q, const PixelGraph& graph, const ConstraintSet& constraints);
std::vector<double> project_onto_Bq(const std::vector<double>& f, int q, const PixelGraph& graph,
                                    const ConstraintSet& constraints);

/// q_B(a) = sup over F in B of F' a. Exact for alpha = infinity. For alpha = 2
/// it is the minimum over splittings of a into per-vertex parts of
/// sum G_i ||b_i / theta^i||, evaluated by reweighted least squares; the value
/// returned is attained by a feasible splitting, so it never underestimates.
/// Passing a state warm-starts the splitting from the previous call and caps
/// the reweighting iterations at state->max_iter.
struct SupportState {
  std::vector<double> tail_share;
  int max_iter = 200;
};
double support_function(std::span<const double> a, const PixelGraph& graph, const ConstraintSet& constraints,
                        SupportState* state = nullptr);

struct TVProblem {
  PixelGraph graph;
  ConstraintSet constraints;
  std::vector<double> d_obs;
  std::vector<double> fidelity;     // V_i > 0
  std::vector<double> measurement;  // diagonal of M; empty means identity
  double gamma = 1.0;               // weight of the unmeasured-pixel regularizer

  void validate() const;
  double measurement_at(std::size_t i) const { return measurement.empty() ? 1.0 : measurement[i]; }
  std::vector<double> gamma_diagonal() const;
  /// c = Gamma M V^-1 d
  std::vector<double> anchor() const;
};

/// Conjugate-gradient tolerances for the dual quadratic step.
struct CgOptions {
  double rel_tol = 1e-8;
  int max_iter = 500;
};

/// argmin_G lam phi(G) + 1/2 ||G - F||^2, from (I + lam W Gamma W') G = F + lam W c.
/// Throws NumericalError (with the last residual) if CG does not converge.
std::vector<double> prox_phi(const std::vector<double>& f, double lam, const TVProblem& problem,
                             const CgOptions& cg = {}, const std::vector<double>* warm_start = nullptr);

struct PpxaParams {
  double lambda = 0.5;
  int max_iter = 300;
  double relax = 1.5;
  double stop_tol = 1e-4;
  bool record_objective = true;
  int threads = 1;
  CgOptions cg;

  void validate() const;
};

struct SolverTrace {
  std::vector<double> residual_norms;     // ||F_{i+1} - F_i|| / max(||F_i||, eps)
  std::vector<double> primal_objective;   // at the primal recovered from F_{i+1}; empty if not recorded
  int iterations_run = 0;
  bool converged = false;
  long cg_iterations = 0;
  int blocks = 0;  // constraint functions after grouping
};

struct PpxaResult {
  std::vector<double> dual;
  SolverTrace trace;
};

/// Parallel proximal algorithm on phi plus the constraint indicators. Vertex
/// constraints are grouped by a proper vertex coloring: vertices of one color
/// share no edge, so the projection onto their intersection is exact and
/// computed per vertex. Each color class and phi get equal weight.
PpxaResult ppxa_solve(const TVProblem& problem, const PpxaParams& params = {});

/// Color index per vertex such that adjacent vertices differ (checkerboard for grids).
std::vector<int> vertex_coloring(const PixelGraph& graph);

/// x = c - Gamma W' F
std::vector<double> recover_primal(std::span<const double> dual, const TVProblem& problem);

double primal_objective(std::span<const double> x, const TVProblem& problem, SupportState* state = nullptr);

struct RefineParams {
  double lambda = 0.5;
  int max_iter = 300;
  double relax = 1.5;
  double stop_tol = 1e-4;
  double nu = 1.0;
  double g0 = 0.3;
  double beta = 5.0;
  NormOrder alpha = NormOrder::kTwo;
  double min_confidence = 0.1;
  bool record_objective = true;
  int threads = 1;

  void validate() const;
};

/// G_i = g0 (1 - clamp(|grad guide|, 0, 1)), central differences, one-sided at borders.
std::vector<double> guide_bounds(const Grid2D<double>& guide, double g0);

/// Builds the problem refine_disparity solves: grid graph from the guide,
/// V_i = nu / max(confidence_i, min_confidence), M = identity.
TVProblem make_refine_problem(const DisparityField& initial, const Grid2D<double>& guide,
                              const RefineParams& params);

struct RefineResult {
  DisparityField field;
  SolverTrace trace;
};

RefineResult refine_disparity(const DisparityField& initial, const Grid2D<double>& guide,
                              const RefineParams& params = {});

}  // namespace lfd
