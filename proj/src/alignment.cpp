#include "lfdepth/alignment.hpp"

#include <fmt/format.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "lfdepth/epi_depth.hpp"
#include "lfdepth/error.hpp"
#include "lfdepth/parallel.hpp"

namespace lfd {
namespace {

constexpr double kRankTol = 1e-10;
constexpr double kTinyHomogeneous = 1e-12;

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

// Similarity taking the points' centroid to the origin and their mean distance to sqrt(2).
Matrix3d hartley(const std::vector<Vector2d>& pts) {
  Vector2d c = Vector2d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean = 0.0;
  for (const auto& p : pts) mean += (p - c).norm();
  mean /= static_cast<double>(pts.size());
  const double s = mean > 0.0 ? std::sqrt(2.0) / mean : 1.0;
  Matrix3d t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

struct Normalized {
  Matrix3d t;        // reference
  Matrix3d t_prime;  // target
  std::vector<Vector2d> p, q;
  std::vector<int> patch;
};

Normalized normalize(const std::vector<Correspondence>& corrs) {
  Normalized n;
  std::vector<Vector2d> a, b;
  for (const auto& c : corrs) {
    a.push_back(c.p);
    b.push_back(c.p_prime);
  }
  n.t = hartley(a);
  n.t_prime = hartley(b);
  for (const auto& c : corrs) {
    n.p.push_back((n.t * c.p.homogeneous()).head<2>());
    n.q.push_back((n.t_prime * c.p_prime.homogeneous()).head<2>());
    n.patch.push_back(c.patch_id);
  }
  return n;
}

// H1, K and dN expressed in normalized coordinates with h33 = 1.
struct NormalizedState {
  Matrix3d h1;
  Vector3d k;
  std::vector<Vector3d> dn;
};

NormalizedState to_normalized(const MotionState& s, const Normalized& n) {
  NormalizedState out;
  out.h1 = n.t_prime * s.h1.matrix() * n.t.inverse();
  const double c = out.h1(2, 2);
  if (std::abs(c) < kTinyHomogeneous) throw NumericalError("alignment: basis homography degenerate after normalization");
  out.h1 /= c;
  out.k = n.t_prime * s.k / c;
  const Matrix3d t_inv_t = n.t.inverse().transpose();
  for (const auto& dn : s.delta_normals) out.dn.push_back(t_inv_t * dn);
  return out;
}

struct LeastSquares {
  VectorXd x;
  int rank = 0;
  double condition = 0.0;
  double residual = 0.0;
};

LeastSquares solve_ls(const MatrixXd& a, const VectorXd& b) {
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  svd.setThreshold(kRankTol);
  LeastSquares out;
  out.rank = static_cast<int>(svd.rank());
  out.x = svd.solve(b);
  out.condition = out.rank > 0 ? smax / sv(out.rank - 1) : std::numeric_limits<double>::infinity();
  out.residual = (a * out.x - b).squaredNorm();
  return out;
}

void delta_normal_system(const NormalizedState& s, const Normalized& n, int t, MatrixXd& a, VectorXd& b) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n.p.size(); ++i) {
    if (n.patch[i] == t) rows.push_back(i);
  }
  a.resize(2 * static_cast<Eigen::Index>(rows.size()), 3);
  b.resize(a.rows());
  const Matrix3d& h = s.h1;
  Eigen::Index r = 0;
  for (std::size_t i : rows) {
    const double p1 = n.p[i].x(), p2 = n.p[i].y(), q1 = n.q[i].x(), q2 = n.q[i].y();
    const double w = h(2, 0) * p1 + h(2, 1) * p2 + 1.0;
    a.row(r) << s.k(0) * p1 - s.k(2) * p1 * q1, s.k(0) * p2 - s.k(2) * p2 * q1, s.k(0) - s.k(2) * q1;
    b(r++) = q1 * w - (h(0, 0) * p1 + h(0, 1) * p2 + h(0, 2));
    a.row(r) << s.k(1) * p1 - s.k(2) * p1 * q2, s.k(1) * p2 - s.k(2) * p2 * q2, s.k(1) - s.k(2) * q2;
    b(r++) = q2 * w - (h(1, 0) * p1 + h(1, 1) * p2 + h(1, 2));
  }
}

void global_system(const std::vector<Vector3d>& dn, const Normalized& n, MatrixXd& a, VectorXd& b) {
  a.setZero(2 * static_cast<Eigen::Index>(n.p.size()), 11);
  b.resize(a.rows());
  for (std::size_t i = 0; i < n.p.size(); ++i) {
    const double p1 = n.p[i].x(), p2 = n.p[i].y(), q1 = n.q[i].x(), q2 = n.q[i].y();
    const double np = dn[n.patch[i] - 1].dot(Vector3d(p1, p2, 1.0));
    const auto r = 2 * static_cast<Eigen::Index>(i);
    a.row(r) << p1, p2, 1, 0, 0, 0, -p1 * q1, -p2 * q1, np, 0, -q1 * np;
    b(r) = q1;
    a.row(r + 1) << 0, 0, 0, p1, p2, 1, -p1 * q2, -p2 * q2, 0, np, -q2 * np;
    b(r + 1) = q2;
  }
}

std::vector<int> patch_sizes(const std::vector<Correspondence>& corrs, int planes) {
  std::vector<int> sizes(planes, 0);
  for (const auto& c : corrs) ++sizes[c.patch_id - 1];
  return sizes;
}

void check_state(const MotionState& state, const std::vector<Correspondence>& corrs) {
  validate_correspondences(corrs);
  if (patch_count(corrs) > state.plane_count()) {
    throw ValidationError(fmt::format("alignment: patch id {} exceeds the state's {} planes", patch_count(corrs),
                                      state.plane_count()));
  }
  if (state.basis_patch < 1 || state.basis_patch > state.plane_count()) {
    throw ValidationError("alignment: basis patch out of range");
  }
}

Matrix3d compose_matrix(const MotionState& state, int t) {
  return state.h1.matrix() + state.k * state.delta_normals[t - 1].transpose();
}

double read_number(const std::string& token, const std::string& origin, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size() || !std::isfinite(v)) {
    throw ValidationError(fmt::format("{}:{}: '{}' is not a finite number", origin, line, token));
  }
  return v;
}

// Separable smoothing with clamped borders.
Grid2D<double> smooth(const Grid2D<double>& in, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const int r = static_cast<int>(taps.size() / 2);
  const int w = in.width(), h = in.height();
  Grid2D<double> tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += taps[k + r] * in(std::clamp(x + k, 0, w - 1), y);
      tmp(x, y) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += taps[k + r] * tmp(x, std::clamp(y + k, 0, h - 1));
      out(x, y) = acc;
    }
  }
  return out;
}

Grid2D<double> harris_response(const Grid2D<float>& img, double sigma, double kappa) {
  const int w = img.width(), h = img.height();
  Grid2D<double> xx(w, h), yy(w, h), xy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (img(std::min(x + 1, w - 1), y) - img(std::max(x - 1, 0), y));
      const double gy = 0.5 * (img(x, std::min(y + 1, h - 1)) - img(x, std::max(y - 1, 0)));
      xx(x, y) = gx * gx;
      yy(x, y) = gy * gy;
      xy(x, y) = gx * gy;
    }
  }
  xx = smooth(xx, sigma);
  yy = smooth(yy, sigma);
  xy = smooth(xy, sigma);
  Grid2D<double> r(w, h);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double a = xx.values()[i], b = yy.values()[i], c = xy.values()[i];
    r.values()[i] = a * b - c * c - kappa * (a + b) * (a + b);
  }
  return r;
}

// Zero-mean, unit-norm copy of the window centred at (cx, cy); empty if flat.
std::vector<double> window(const Grid2D<float>& img, int cx, int cy, int radius) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)));
  double mean = 0.0;
  for (int y = cy - radius; y <= cy + radius; ++y) {
    for (int x = cx - radius; x <= cx + radius; ++x) {
      v.push_back(img(x, y));
      mean += img(x, y);
    }
  }
  mean /= static_cast<double>(v.size());
  double norm = 0.0;
  for (double& x : v) {
    x -= mean;
    norm += x * x;
  }
  if (norm < 1e-12) return {};
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double parabola_offset(double left, double centre, double right) {
  const double denom = left - 2.0 * centre + right;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

}  // namespace

Homography::Homography(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) throw ValidationError("Homography: non-finite entries");
  if (std::abs(m(2, 2)) < kTinyHomogeneous) throw ValidationError("Homography: h33 is zero, cannot normalize");
  h_ = m / m(2, 2);
  if (std::abs(h_.determinant()) <= 1e-12) throw ValidationError("Homography: matrix is singular");
}

void validate_correspondences(const std::vector<Correspondence>& corrs) {
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto& c = corrs[i];
    if (!c.p.allFinite() || !c.p_prime.allFinite()) {
      throw ValidationError(fmt::format("correspondence {}: non-finite coordinates", i));
    }
    if (c.patch_id < 1) throw ValidationError(fmt::format("correspondence {}: patch id {} < 1", i, c.patch_id));
  }
}

int patch_count(const std::vector<Correspondence>& corrs) {
  int j = 0;
  for (const auto& c : corrs) j = std::max(j, c.patch_id);
  return j;
}

MotionState MotionState::identity(int planes) {
  MotionState s;
  s.delta_normals.assign(planes, Vector3d::Zero());
  s.scale_d.assign(planes, 1.0);
  return s;
}

Homography compose_patch_homography(const MotionState& state, int t) {
  if (t < 1 || t > state.plane_count()) throw ValidationError(fmt::format("compose: plane {} out of range", t));
  try {
    return Homography(compose_matrix(state, t));
  } catch (const ValidationError& e) {
    throw NumericalError(fmt::format("compose: plane {}: {}", t, e.what()));
  }
}

void update_scales(MotionState& state) {
  state.scale_d.resize(state.delta_normals.size());
  for (int t = 1; t <= state.plane_count(); ++t) state.scale_d[t - 1] = compose_matrix(state, t)(2, 2);
}

const char* to_string(PatchStatus status) {
  switch (status) {
    case PatchStatus::kOk: return "ok";
    case PatchStatus::kRankDeficient: return "rank_deficient";
    case PatchStatus::kDegenerateTranslation: return "degenerate_translation";
  }
  return "unknown";
}

DeltaNormalSolution solve_delta_normals(const MotionState& state, const std::vector<Correspondence>& corrs) {
  check_state(state, corrs);
  const int planes = state.plane_count();
  const auto sizes = patch_sizes(corrs, planes);
  for (int t = 1; t <= planes; ++t) {
    if (t != state.basis_patch && sizes[t - 1] < 3) {
      throw ValidationError(fmt::format("solve_delta_normals: patch {} has {} correspondences, needs 3", t,
                                        sizes[t - 1]));
    }
  }
  DeltaNormalSolution out;
  out.delta_normals.assign(planes, Vector3d::Zero());
  out.status.assign(planes, PatchStatus::kOk);
  out.residuals.assign(planes, 0.0);

  const Normalized n = normalize(corrs);
  const NormalizedState ns = to_normalized(state, n);
  if (ns.k.norm() <= 1e-12) {
    out.degenerate_translation = true;
    for (int t = 1; t <= planes; ++t) {
      if (t != state.basis_patch) out.status[t - 1] = PatchStatus::kDegenerateTranslation;
    }
    return out;
  }
  const Matrix3d back = n.t.transpose();
  for (int t = 1; t <= planes; ++t) {
    if (t == state.basis_patch) continue;
    MatrixXd a;
    VectorXd b;
    delta_normal_system(ns, n, t, a, b);
    const LeastSquares ls = solve_ls(a, b);
    out.delta_normals[t - 1] = back * Vector3d(ls.x);
    out.residuals[t - 1] = ls.residual;
    if (ls.rank < 3) out.status[t - 1] = PatchStatus::kRankDeficient;
  }
  return out;
}

double delta_normal_residual(const MotionState& state, const std::vector<Correspondence>& corrs, int t) {
  check_state(state, corrs);
  const Normalized n = normalize(corrs);
  const NormalizedState ns = to_normalized(state, n);
  MatrixXd a;
  VectorXd b;
  delta_normal_system(ns, n, t, a, b);
  return (a * ns.dn[t - 1] - b).squaredNorm();
}

GlobalMotionSolution solve_global_motion(const std::vector<Eigen::Vector3d>& delta_normals,
                                         const std::vector<Correspondence>& corrs) {
  validate_correspondences(corrs);
  if (corrs.size() < 6) {
    throw ValidationError(fmt::format("solve_global_motion: {} correspondences, needs 6", corrs.size()));
  }
  if (patch_count(corrs) > static_cast<int>(delta_normals.size())) {
    throw ValidationError("solve_global_motion: patch id without a normal offset");
  }
  const Normalized n = normalize(corrs);
  std::vector<Vector3d> dn;
  const Matrix3d t_inv_t = n.t.inverse().transpose();
  bool any = false;
  for (const auto& d : delta_normals) {
    dn.push_back(t_inv_t * d);
    any = any || d != Vector3d::Zero();
  }
  MatrixXd a;
  VectorXd b;
  global_system(dn, n, a, b);
  const LeastSquares ls = solve_ls(a, b);

  Matrix3d h;
  h << ls.x(0), ls.x(1), ls.x(2), ls.x(3), ls.x(4), ls.x(5), ls.x(6), ls.x(7), 1.0;
  Vector3d k(ls.x(8), ls.x(9), ls.x(10));
  const Matrix3d tp_inv = n.t_prime.inverse();
  h = tp_inv * h * n.t;
  k = tp_inv * k;
  if (std::abs(h(2, 2)) < kTinyHomogeneous) throw NumericalError("solve_global_motion: h33 vanished");
  k /= h(2, 2);
  GlobalMotionSolution out;
  try {
    out.h1 = Homography(h);
  } catch (const ValidationError& e) {
    throw NumericalError(fmt::format("solve_global_motion: {}", e.what()));
  }
  out.k = k;
  out.rank = ls.rank;
  out.condition = ls.condition;
  out.residual = ls.residual;
  out.rank_deficient = ls.rank < (any ? 11 : 8);
  return out;
}

double global_motion_residual(const MotionState& state, const std::vector<Correspondence>& corrs) {
  check_state(state, corrs);
  const Normalized n = normalize(corrs);
  const NormalizedState ns = to_normalized(state, n);
  MatrixXd a;
  VectorXd b;
  global_system(ns.dn, n, a, b);
  Eigen::Matrix<double, 11, 1> g;
  g << ns.h1(0, 0), ns.h1(0, 1), ns.h1(0, 2), ns.h1(1, 0), ns.h1(1, 1), ns.h1(1, 2), ns.h1(2, 0), ns.h1(2, 1),
      ns.k(0), ns.k(1), ns.k(2);
  return (a * g - b).squaredNorm();
}

namespace {

void accumulate(const Matrix3d& h, const Correspondence& c, ReprojectionError& e, double& sum) {
  const Vector3d q = h * c.p.homogeneous();
  if (std::abs(q.z()) < kTinyHomogeneous * std::max(1.0, q.head<2>().norm())) {
    ++e.excluded;
    return;
  }
  sum += (q.hnormalized() - c.p_prime).norm();
  ++e.used;
}

ReprojectionError finish(ReprojectionError e, double sum) {
  e.mean = e.used ? sum / e.used : std::numeric_limits<double>::infinity();
  return e;
}

}  // namespace

ReprojectionError reprojection_error(const Homography& h, const std::vector<Correspondence>& corrs) {
  if (corrs.empty()) throw ValidationError("reprojection_error: no correspondences");
  ReprojectionError e;
  double sum = 0.0;
  for (const auto& c : corrs) accumulate(h.matrix(), c, e, sum);
  return finish(e, sum);
}

ReprojectionError reprojection_error(const MotionState& state, const std::vector<Correspondence>& corrs) {
  if (corrs.empty()) throw ValidationError("reprojection_error: no correspondences");
  check_state(state, corrs);
  std::vector<Matrix3d> hs;
  for (int t = 1; t <= state.plane_count(); ++t) hs.push_back(compose_matrix(state, t));
  ReprojectionError e;
  double sum = 0.0;
  for (const auto& c : corrs) accumulate(hs[c.patch_id - 1], c, e, sum);
  return finish(e, sum);
}

Homography fit_homography(const std::vector<Correspondence>& corrs) {
  validate_correspondences(corrs);
  if (corrs.size() < 4) throw ValidationError(fmt::format("fit_homography: {} correspondences, needs 4", corrs.size()));
  const Normalized n = normalize(corrs);
  MatrixXd a = MatrixXd::Zero(2 * static_cast<Eigen::Index>(corrs.size()), 9);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Vector3d p = n.p[i].homogeneous();
    const double q1 = n.q[i].x(), q2 = n.q[i].y();
    const auto r = 2 * static_cast<Eigen::Index>(i);
    a.block<1, 3>(r, 0) = p.transpose();
    a.block<1, 3>(r, 6) = -q1 * p.transpose();
    a.block<1, 3>(r + 1, 3) = p.transpose();
    a.block<1, 3>(r + 1, 6) = -q2 * p.transpose();
  }
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullV);
  const VectorXd v = svd.matrixV().col(8);
  Matrix3d h;
  h << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  h = n.t_prime.inverse() * h * n.t;
  try {
    return Homography(h);
  } catch (const ValidationError& e) {
    throw NumericalError(fmt::format("fit_homography: {}", e.what()));
  }
}

namespace {

// With a second patch of at least 4 matches, H1^-1 H_t = lambda (I + u w') is a
// planar homology: lambda is its repeated eigenvalue and K = H1 u. Otherwise
// K starts as the third column of H1 minus e3.
Vector3d initial_translation(const Homography& h1, const std::vector<Correspondence>& corrs,
                             const std::vector<int>& sizes, int basis) {
  const Vector3d fallback = h1.matrix().col(2) - Vector3d::UnitZ();
  int other = 0;
  for (int t = 1; t <= static_cast<int>(sizes.size()); ++t) {
    if (t != basis && sizes[t - 1] >= 4 && (other == 0 || sizes[t - 1] > sizes[other - 1])) other = t;
  }
  if (other == 0) return fallback;
  std::vector<Correspondence> patch;
  for (const auto& c : corrs) {
    if (c.patch_id == other) patch.push_back(c);
  }
  Matrix3d m;
  try {
    m = h1.matrix().inverse() * fit_homography(patch).matrix();
  } catch (const NumericalError&) {
    return fallback;
  }
  const Eigen::Vector3cd eig = m.eigenvalues();
  std::array<double, 3> re{eig(0).real(), eig(1).real(), eig(2).real()};
  std::sort(re.begin(), re.end());
  if (std::abs(re[1]) < kTinyHomogeneous) return fallback;
  const Matrix3d a = m / re[1] - Matrix3d::Identity();
  Eigen::JacobiSVD<Matrix3d> svd(a, Eigen::ComputeFullU);
  const double s = svd.singularValues()(0);
  if (!(s > 1e-12)) return fallback;
  return h1.matrix() * svd.matrixU().col(0) * s;
}

}  // namespace

void AlignParams::validate() const {
  if (!(threshold > 0.0) || !std::isfinite(threshold)) {
    throw ValidationError(fmt::format("align: threshold must be positive, got {}", threshold));
  }
  if (max_iter < 1) throw ValidationError(fmt::format("align: max_iter must be >= 1, got {}", max_iter));
  if (threads < 0) throw ValidationError("align: threads must be >= 0");
}

ViewAlignment align_view(const std::vector<Correspondence>& corrs, const AlignParams& params) {
  params.validate();
  validate_correspondences(corrs);
  if (corrs.size() < 6) throw ValidationError(fmt::format("align: {} correspondences, needs 6", corrs.size()));
  const int planes = patch_count(corrs);
  const auto sizes = patch_sizes(corrs, planes);
  const int basis = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin()) + 1;
  for (int t = 1; t <= planes; ++t) {
    const int need = t == basis ? 4 : 3;
    if (sizes[t - 1] < need) {
      throw ValidationError(fmt::format("align: patch {} has {} correspondences, needs {}", t, sizes[t - 1], need));
    }
  }

  std::vector<Correspondence> basis_corrs;
  for (const auto& c : corrs) {
    if (c.patch_id == basis) basis_corrs.push_back(c);
  }
  ViewAlignment out;
  MotionState state = MotionState::identity(planes);
  state.basis_patch = basis;
  state.h1 = fit_homography(basis_corrs);
  state.k = initial_translation(state.h1, corrs, sizes, basis);

  MotionState best = state;
  double best_error = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= params.max_iter; ++it) {
    const DeltaNormalSolution dn = solve_delta_normals(state, corrs);
    state.delta_normals = dn.delta_normals;
    out.degenerate_translation = dn.degenerate_translation;
    for (auto s : dn.status) out.rank_deficient_solves += s == PatchStatus::kRankDeficient;

    const GlobalMotionSolution gm = solve_global_motion(state.delta_normals, corrs);
    state.h1 = gm.h1;
    state.k = gm.k;
    out.condition = gm.condition;
    out.rank_deficient_solves += gm.rank_deficient;

    const double err = reprojection_error(state, corrs).mean;
    out.error_trace.push_back(err);
    out.iterations = it;
    if (err < best_error) {
      best_error = err;
      best = state;
    }
    if (err < params.threshold) {
      out.converged = true;
      break;
    }
  }
  update_scales(best);
  out.state = std::move(best);
  return out;
}

ArrayAlignment align_array(const LightField4D& lf, const std::vector<std::vector<Correspondence>>& corrs,
                           const AlignParams& params) {
  params.validate();
  const std::size_t count = static_cast<std::size_t>(lf.views_u()) * lf.views_v();
  ArrayAlignment out;
  out.views.resize(count);
  for (auto& v : out.views) {
    v.state = MotionState::identity();
    v.converged = true;
  }
  if (params.identity) {
    out.aligned = lf;
    return out;
  }
  if (corrs.size() != count) {
    throw ValidationError(fmt::format("align: {} correspondence lists for {} views", corrs.size(), count));
  }
  const std::size_t ref = static_cast<std::size_t>(lf.center_v()) * lf.views_u() + lf.center_u();
  for (std::size_t i = 0; i < count; ++i) {
    if (i != ref && corrs[i].empty()) throw ValidationError(fmt::format("align: view {} has no correspondences", i));
  }
  const int threads = params.threads == 0 ? default_thread_count() : params.threads;
  parallel_for(count, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (i != ref) out.views[i] = align_view(corrs[i], params);
    }
  });

  std::vector<Homography> warps;
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    warps.push_back(out.views[i].state.h1);
    if (i == ref) continue;
    sum += out.views[i].error_trace.empty() ? 0.0 : *std::min_element(out.views[i].error_trace.begin(),
                                                                        out.views[i].error_trace.end());
    out.converged = out.converged && out.views[i].converged;
  }
  out.mean_error = count > 1 ? sum / static_cast<double>(count - 1) : 0.0;
  out.aligned = warp_lightfield(lf, warps);
  return out;
}

Grid2D<float> warp_image(const Grid2D<float>& src, const Homography& h) {
  if (h.is_identity()) return src;
  const int w = src.width(), ht = src.height();
  Grid2D<float> out(w, ht);
  if (src.empty()) return out;
  const Matrix3d& m = h.matrix();
  for (int y = 0; y < ht; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vector3d q = m * Vector3d(x, y, 1.0);
      double sx = q.x() / q.z(), sy = q.y() / q.z();
      if (!std::isfinite(sx) || !std::isfinite(sy)) sx = sy = 0.0;
      sx = std::clamp(sx, 0.0, w - 1.0);
      sy = std::clamp(sy, 0.0, ht - 1.0);
      const int x0 = std::min(static_cast<int>(sx), w - 1), y0 = std::min(static_cast<int>(sy), ht - 1);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, ht - 1);
      const double fx = sx - x0, fy = sy - y0;
      const double top = (1.0 - fx) * src(x0, y0) + fx * src(x1, y0);
      const double bottom = (1.0 - fx) * src(x0, y1) + fx * src(x1, y1);
      out(x, y) = static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  return out;
}

LightField4D warp_lightfield(const LightField4D& lf, const std::vector<Homography>& per_view) {
  const std::size_t count = static_cast<std::size_t>(lf.views_u()) * lf.views_v();
  if (per_view.size() != count) {
    throw ValidationError(fmt::format("warp_lightfield: {} homographies for {} views", per_view.size(), count));
  }
  std::vector<float> samples(lf.samples().begin(), lf.samples().end());
  const std::size_t plane = static_cast<std::size_t>(lf.width()) * lf.height();
  for (int v = 0; v < lf.views_v(); ++v) {
    for (int u = 0; u < lf.views_u(); ++u) {
      const std::size_t vi = static_cast<std::size_t>(v) * lf.views_u() + u;
      if (per_view[vi].is_identity()) continue;
      for (int c = 0; c < lf.channels(); ++c) {
        const Grid2D<float> warped = warp_image(lf.view(u, v, c), per_view[vi]);
        for (std::size_t p = 0; p < plane; ++p) samples[(vi * plane + p) * lf.channels() + c] = warped.values()[p];
      }
    }
  }
  return LightField4D(lf.views_u(), lf.views_v(), lf.width(), lf.height(), lf.channels(), std::move(samples));
}

std::vector<Correspondence> parse_correspondences(const std::string& text, const std::string& origin) {
  std::vector<Correspondence> out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty()) continue;
    if (tokens.size() != 5) {
      throw ValidationError(fmt::format("{}:{}: expected 5 fields 't p1 p2 p1' p2'', got {}", origin, number,
                                        tokens.size()));
    }
    const double t = read_number(tokens[0], origin, number);
    if (t != std::floor(t) || t < 1 || t > 1e6) {
      throw ValidationError(fmt::format("{}:{}: patch id must be a positive integer", origin, number));
    }
    Correspondence c;
    c.patch_id = static_cast<int>(t);
    c.p = {read_number(tokens[1], origin, number), read_number(tokens[2], origin, number)};
    c.p_prime = {read_number(tokens[3], origin, number), read_number(tokens[4], origin, number)};
    out.push_back(c);
  }
  return out;
}

std::vector<Correspondence> read_correspondences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open correspondence file {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_correspondences(buf.str(), path.string());
}

void write_correspondences(const std::filesystem::path& path, const std::vector<Correspondence>& corrs) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write correspondence file {}", path.string()));
  for (const auto& c : corrs) {
    out << fmt::format("{} {} {} {} {}\n", c.patch_id, c.p.x(), c.p.y(), c.p_prime.x(),
                       c.p_prime.y());
  }
  if (!out) throw IoError(fmt::format("write failed: {}", path.string()));
}

std::vector<Correspondence> match_features(const Grid2D<float>& reference, const Grid2D<float>& target,
                                           const MatchParams& params) {
  if (!reference.same_shape(target)) throw ValidationError("match_features: images differ in size");
  if (params.window_radius < 1 || params.search_radius < 0 || params.max_corners < 1) {
    throw ValidationError("match_features: invalid parameters");
  }
  const int w = reference.width(), h = reference.height();
  const int wr = params.window_radius, sr = params.suppression_radius;
  const Grid2D<double> response = harris_response(reference, params.harris_sigma, params.harris_k);
  double peak = 0.0;
  for (double r : response.values()) peak = std::max(peak, r);
  if (peak <= 0.0) return {};

  struct Corner {
    double score;
    int x, y;
  };
  std::vector<Corner> corners;
  for (int y = wr; y < h - wr; ++y) {
    for (int x = wr; x < w - wr; ++x) {
      const double r = response(x, y);
      if (r < 0.01 * peak) continue;
      bool is_max = true;
      for (int dy = -sr; dy <= sr && is_max; ++dy) {
        for (int dx = -sr; dx <= sr; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if ((dx || dy) && xx >= 0 && yy >= 0 && xx < w && yy < h) {
            const double o = response(xx, yy);
            // Ties go to the earlier pixel in scan order.
            if (o > r || (o == r && (yy < y || (yy == y && xx < x)))) {
              is_max = false;
              break;
            }
          }
        }
      }
      if (is_max) corners.push_back({r, x, y});
    }
  }
  std::stable_sort(corners.begin(), corners.end(), [](const Corner& a, const Corner& b) { return a.score > b.score; });
  if (corners.size() > static_cast<std::size_t>(params.max_corners)) corners.resize(params.max_corners);

  std::vector<Correspondence> out;
  const int span = 2 * params.search_radius + 1;
  std::vector<double> scores(static_cast<std::size_t>(span) * span);
  for (const auto& c : corners) {
    const auto ref = window(reference, c.x, c.y, wr);
    if (ref.empty()) continue;
    std::fill(scores.begin(), scores.end(), -2.0);
    double best = -2.0;
    int bx = 0, by = 0;
    for (int dy = -params.search_radius; dy <= params.search_radius; ++dy) {
      for (int dx = -params.search_radius; dx <= params.search_radius; ++dx) {
        const int tx = c.x + dx, ty = c.y + dy;
        if (tx < wr || ty < wr || tx >= w - wr || ty >= h - wr) continue;
        const auto tw = window(target, tx, ty, wr);
        if (tw.empty()) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < tw.size(); ++i) s += ref[i] * tw[i];
        scores[static_cast<std::size_t>(dy + params.search_radius) * span + dx + params.search_radius] = s;
        if (s > best) {
          best = s;
          bx = dx;
          by = dy;
        }
      }
    }
    if (best < params.min_ncc) continue;
    auto at = [&](int dx, int dy) {
      if (std::abs(dx) > params.search_radius || std::abs(dy) > params.search_radius) return -2.0;
      return scores[static_cast<std::size_t>(dy + params.search_radius) * span + dx + params.search_radius];
    };
    double ox = 0.0, oy = 0.0;
    if (at(bx - 1, by) > -2.0 && at(bx + 1, by) > -2.0) ox = parabola_offset(at(bx - 1, by), best, at(bx + 1, by));
    if (at(bx, by - 1) > -2.0 && at(bx, by + 1) > -2.0) oy = parabola_offset(at(bx, by - 1), best, at(bx, by + 1));
    Correspondence m;
    m.p = {static_cast<double>(c.x), static_cast<double>(c.y)};
    m.p_prime = {c.x + bx + ox, c.y + by + oy};
    m.patch_id = 1;
    out.push_back(m);
  }
  return out;
}

}  // namespace lfd
