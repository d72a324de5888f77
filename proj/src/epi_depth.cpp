#include "lfdepth/epi_depth.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "lfdepth/error.hpp"
#include "lfdepth/parallel.hpp"
#include "lfdepth/simd/kernels.hpp"

namespace lfd {
namespace {

using simd::Boundary;

constexpr double kTraceEpsilon = 1e-300;
constexpr double kMaxSlope = 1e6;

int taps_radius(double sigma) { return std::max(1, static_cast<int>(std::ceil(3.0 * sigma))); }

Grid2D<double> filter_rows(const Grid2D<double>& in, const std::vector<double>& taps, Boundary boundary) {
  Grid2D<double> out(in.width(), in.height());
  for (int y = 0; y < in.height(); ++y) simd::convolve(in.row(y), out.row(y), taps, boundary);
  return out;
}

Grid2D<double> filter_columns(const Grid2D<double>& in, const std::vector<double>& taps, Boundary boundary) {
  const int w = in.width();
  const int h = in.height();
  const int r = static_cast<int>(taps.size() / 2);
  Grid2D<double> padded(w, h + 2 * r);
  for (int py = 0; py < h + 2 * r; ++py) {
    const simd::ExtendedSample e = simd::extend(py - r, static_cast<std::size_t>(h), boundary);
    auto dst = padded.row(py);
    std::fill(dst.begin(), dst.end(), 0.0);
    if (e.count == 1) {
      const auto src = in.row(static_cast<int>(e.source[0]));
      std::copy(src.begin(), src.end(), dst.begin());
    } else {
      const auto a = in.row(static_cast<int>(e.source[0]));
      const auto b = in.row(static_cast<int>(e.source[1]));
      for (int x = 0; x < w; ++x) dst[x] = e.weight[0] * a[x] + e.weight[1] * b[x];
    }
  }
  const int parity = simd::tap_parity(taps);
  Grid2D<double> out(w, h, 0.0);
  for (int y = 0; y < h; ++y) {
    auto dst = out.row(y);
    if (parity == 0) {
      for (int k = 0; k <= 2 * r; ++k) simd::axpy(taps[k], padded.row(y + k), dst);
    } else {
      simd::axpy(taps[r], padded.row(y + r), dst);
      const double sign = parity > 0 ? 1.0 : -1.0;
      for (int k = 0; k < r; ++k) simd::axpy_pair(taps[k], padded.row(y + k), padded.row(y + 2 * r - k), sign, dst);
    }
  }
  return out;
}

Grid2D<double> separable(const Grid2D<double>& in, const std::vector<double>& row_taps,
                         const std::vector<double>& column_taps, Boundary boundary) {
  return filter_columns(filter_rows(in, row_taps, boundary), column_taps, boundary);
}

DisparityField empty_like(int width, int height) { return DisparityField(width, height); }

void store_candidate(DisparityField& field, int x, int y, const SlopeEstimate& est, const CameraConfig& cfg,
                     double coherence_min) {
  float disparity = 0.0f;
  float confidence = 0.0f;
  bool valid = false;
  if (est.valid) {
    disparity = static_cast<float>(std::clamp(-est.slope, cfg.disp_min, cfg.disp_max));
    confidence = static_cast<float>(est.coherence);
    valid = est.coherence >= coherence_min;
  } else {
    disparity = static_cast<float>(std::clamp(0.0, cfg.disp_min, cfg.disp_max));
  }
  field.disparity(x, y) = disparity;
  field.confidence(x, y) = confidence;
  field.valid(x, y) = valid ? 1 : 0;
}

}  // namespace

std::vector<double> gaussian_taps(double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian_taps: sigma must be positive");
  const int r = taps_radius(sigma);
  std::vector<double> taps(2 * r + 1);
  double sum = 0.0;
  for (int k = -r; k <= r; ++k) {
    taps[k + r] = std::exp(-0.5 * k * k / (sigma * sigma));
    sum += taps[k + r];
  }
  for (double& t : taps) t /= sum;
  // exact mirror symmetry so filters can use the paired summation
  for (int k = 0; k < r; ++k) taps[2 * r - k] = taps[k];
  return taps;
}

std::vector<double> gaussian_derivative_taps(double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian_derivative_taps: sigma must be positive");
  const int r = taps_radius(sigma);
  std::vector<double> taps(2 * r + 1);
  double moment = 0.0;
  for (int k = -r; k <= r; ++k) {
    taps[k + r] = k * std::exp(-0.5 * k * k / (sigma * sigma));
    moment += k * taps[k + r];
  }
  for (double& t : taps) t /= moment;
  for (int k = 0; k < r; ++k) taps[k] = -taps[2 * r - k];
  taps[r] = 0.0;
  return taps;
}

StructureTensorField structure_tensor(const Grid2D<double>& epi, double sigma_inner, double sigma_outer) {
  if (!(sigma_inner > 0.0) || !(sigma_outer > 0.0)) {
    throw ValidationError("structure_tensor: sigmas must be positive");
  }
  if (epi.width() < 3 || epi.height() < 3) {
    throw ValidationError(fmt::format("structure_tensor: EPI is {}x{}, minimum size is 3x3", epi.width(), epi.height()));
  }
  const auto smooth_inner = gaussian_taps(sigma_inner);
  const auto derivative = gaussian_derivative_taps(sigma_inner);
  const auto smooth_outer = gaussian_taps(sigma_outer);

  const Grid2D<double> gs = separable(epi, derivative, smooth_inner, Boundary::kPointSymmetric);
  const Grid2D<double> ga = separable(epi, smooth_inner, derivative, Boundary::kPointSymmetric);

  Grid2D<double> ss(epi.width(), epi.height()), sa(epi.width(), epi.height()), aa(epi.width(), epi.height());
  simd::structure_products(gs.values(), ga.values(), ss.values(), sa.values(), aa.values());

  // Mirror extension keeps the smoothed moments non-negative.
  return {separable(ss, smooth_outer, smooth_outer, Boundary::kSymmetric),
          separable(sa, smooth_outer, smooth_outer, Boundary::kSymmetric),
          separable(aa, smooth_outer, smooth_outer, Boundary::kSymmetric)};
}

StructureTensorField structure_tensor(const EpiSlice& epi, double sigma_inner, double sigma_outer) {
  return structure_tensor(epi.data, sigma_inner, sigma_outer);
}

SlopeEstimate slope_from_tensor(double j_ss, double j_sa, double j_aa) {
  SlopeEstimate est;
  const double trace = j_ss + j_aa;
  if (!(trace > kTraceEpsilon)) return est;
  const double diff = j_ss - j_aa;
  const double anisotropy = std::sqrt(diff * diff + 4.0 * j_sa * j_sa);
  est.coherence = std::min(1.0, anisotropy / trace);
  if (!(anisotropy > 0.0)) {
    est.coherence = 0.0;
    return est;
  }
  // Dominant gradient angle theta = atan2(2 j_sa, j_ss - j_aa) / 2; the
  // iso-intensity direction is perpendicular, with ds/da = -tan(theta).
  const double theta = 0.5 * std::atan2(2.0 * j_sa, diff);
  const double slope = -std::tan(theta);
  if (std::isfinite(slope) && std::abs(slope) < kMaxSlope) {
    est.slope = slope;
    est.valid = true;
  }
  return est;
}

Grid2D<SlopeEstimate> slope_from_tensor(const StructureTensorField& tensor) {
  Grid2D<SlopeEstimate> out(tensor.j_ss.width(), tensor.j_ss.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = slope_from_tensor(tensor.j_ss.values()[i], tensor.j_sa.values()[i], tensor.j_aa.values()[i]);
  }
  return out;
}

DepthValue slope_to_depth(double angular_per_spatial, double plane_separation) {
  const double denom = 1.0 - angular_per_spatial;
  if (denom == 0.0) return {std::numeric_limits<double>::infinity(), DepthStatus::kInfinite};
  const double z = plane_separation / denom;
  return {z, denom < 0.0 ? DepthStatus::kNonPhysical : DepthStatus::kFinite};
}

double depth_to_slope(double depth, double plane_separation) { return 1.0 - plane_separation / depth; }

void EpiDepthParams::validate() const {
  if (!(sigma_inner > 0.0) || !(sigma_outer > 0.0)) throw ValidationError("epi depth: sigmas must be positive");
  if (!(coherence_min >= 0.0 && coherence_min <= 1.0)) {
    throw ValidationError("epi depth: coherence_min must lie in [0, 1]");
  }
}

OrientationCandidates estimate_orientation_candidates(const LightField4D& lf, const CameraConfig& cfg,
                                                      const EpiDepthParams& params) {
  params.validate();
  if (lf.channels() != 1) throw ValidationError("estimate_initial_disparity: light field must be grayscale");
  const bool want_h = params.orientation != EpiOrientations::kVertical;
  const bool want_v = params.orientation != EpiOrientations::kHorizontal;
  const bool can_h = lf.views_u() >= 3;
  const bool can_v = lf.views_v() >= 3;
  const bool do_h = want_h && can_h;
  const bool do_v = want_v && can_v;
  if (!do_h && !do_v) {
    throw ValidationError(fmt::format(
        "estimate_initial_disparity: no usable orientation (U={}, V={}; each axis needs at least 3 views)",
        lf.views_u(), lf.views_v()));
  }
  const int cu = cfg.center_u >= 0 ? cfg.center_u : lf.center_u();
  const int cv = cfg.center_v >= 0 ? cfg.center_v : lf.center_v();

  OrientationCandidates out;
  if (do_h) {
    out.horizontal = empty_like(lf.width(), lf.height());
    parallel_for(static_cast<std::size_t>(lf.height()), params.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t y = begin; y < end; ++y) {
        const EpiSlice epi = extract_epi_horizontal(lf, static_cast<int>(y), cv);
        const auto tensor = structure_tensor(epi, params.sigma_inner, params.sigma_outer);
        for (int x = 0; x < lf.width(); ++x) {
          const auto est = slope_from_tensor(tensor.j_ss(x, cu), tensor.j_sa(x, cu), tensor.j_aa(x, cu));
          store_candidate(out.horizontal, x, static_cast<int>(y), est, cfg, params.coherence_min);
        }
      }
    });
  }
  if (do_v) {
    out.vertical = empty_like(lf.width(), lf.height());
    parallel_for(static_cast<std::size_t>(lf.width()), params.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t x = begin; x < end; ++x) {
        const EpiSlice epi = extract_epi_vertical(lf, static_cast<int>(x), cu);
        const auto tensor = structure_tensor(epi, params.sigma_inner, params.sigma_outer);
        for (int y = 0; y < lf.height(); ++y) {
          const auto est = slope_from_tensor(tensor.j_ss(y, cv), tensor.j_sa(y, cv), tensor.j_aa(y, cv));
          store_candidate(out.vertical, static_cast<int>(x), y, est, cfg, params.coherence_min);
        }
      }
    });
  }
  return out;
}

DisparityField merge_candidates(const OrientationCandidates& candidates, double coherence_min) {
  const DisparityField& h = candidates.horizontal;
  const DisparityField& v = candidates.vertical;
  if (h.disparity.empty()) return v;
  if (v.disparity.empty()) return h;
  if (!h.disparity.same_shape(v.disparity)) throw ValidationError("merge_candidates: shape mismatch");
  DisparityField out(h.width(), h.height());
  for (std::size_t i = 0; i < out.disparity.size(); ++i) {
    const bool take_h = h.confidence.values()[i] >= v.confidence.values()[i];
    const DisparityField& src = take_h ? h : v;
    out.disparity.values()[i] = src.disparity.values()[i];
    out.confidence.values()[i] = src.confidence.values()[i];
    out.valid.values()[i] = src.valid.values()[i];
  }
  (void)coherence_min;
  return out;
}

DisparityField estimate_initial_disparity(const LightField4D& lf, const CameraConfig& cfg,
                                          const EpiDepthParams& params) {
  return merge_candidates(estimate_orientation_candidates(lf, cfg, params), params.coherence_min);
}

Grid2D<double> disparity_to_depth_map(const DisparityField& field, const CameraConfig& cfg) {
  const double a = cfg.separation();
  Grid2D<double> out(field.width(), field.height(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!field.valid.values()[i]) continue;
    const DepthValue z = slope_to_depth(-static_cast<double>(field.disparity.values()[i]), a);
    if (z.status == DepthStatus::kFinite) out.values()[i] = z.depth;
  }
  return out;
}

}  // namespace lfd
