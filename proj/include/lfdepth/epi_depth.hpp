#pragma once

// Local disparity from EPI line orientation, measured with a structure tensor
// on every horizontal and vertical epipolar-plane image through the center view.

#include <vector>

#include "lfdepth/grid.hpp"
#include "lfdepth/lightfield.hpp"

namespace lfd {

/// Second-moment components in (spatial, angular) coordinates of an EPI.
struct StructureTensorField {
  Grid2D<double> j_ss;
  Grid2D<double> j_sa;
  Grid2D<double> j_aa;
};

/// slope is the spatial shift per angular step along iso-intensity lines
/// (dx/du or dy/dv); coherence in [0, 1].
struct SlopeEstimate {
  double slope = 0.0;
  double coherence = 0.0;
  bool valid = false;
};

/// Normalized sampled Gaussian, radius ceil(3 sigma) (at least 1).
std::vector<double> gaussian_taps(double sigma);
/// Sampled Gaussian derivative scaled so a unit ramp has unit response.
std::vector<double> gaussian_derivative_taps(double sigma);

/// Gaussian-derivative gradients at sigma_inner (odd extension at the
/// borders), outer products smoothed at sigma_outer (mirror extension).
/// The input must be at least 3 x 3.
StructureTensorField structure_tensor(const Grid2D<double>& epi, double sigma_inner, double sigma_outer);
StructureTensorField structure_tensor(const EpiSlice& epi, double sigma_inner, double sigma_outer);

SlopeEstimate slope_from_tensor(double j_ss, double j_sa, double j_aa);
Grid2D<SlopeEstimate> slope_from_tensor(const StructureTensorField& tensor);

enum class DepthStatus { kFinite, kInfinite, kNonPhysical };

struct DepthValue {
  double depth = 0.0;
  DepthStatus status = DepthStatus::kFinite;
};

/// Two-plane geometry: du/dx = (Z - A) / Z, so Z = A / (1 - du/dx).
DepthValue slope_to_depth(double angular_per_spatial, double plane_separation);
/// Inverse map: du/dx = 1 - A / Z.
double depth_to_slope(double depth, double plane_separation);

enum class EpiOrientations { kBoth, kHorizontal, kVertical };

struct EpiDepthParams {
  double sigma_inner = 0.8;
  double sigma_outer = 2.0;
  double coherence_min = 0.05;
  EpiOrientations orientation = EpiOrientations::kBoth;
  int threads = 0;

  void validate() const;
};

/// Per-orientation estimates for the center view, already converted to
/// disparity and clamped to the config range. An orientation that was not
/// computed is left empty.
struct OrientationCandidates {
  DisparityField horizontal;
  DisparityField vertical;
};

OrientationCandidates estimate_orientation_candidates(const LightField4D& lf, const CameraConfig& cfg,
                                                      const EpiDepthParams& params);

/// Per-pixel selection of the candidate with larger coherence; ties go to
/// the horizontal estimate. Never blends.
DisparityField merge_candidates(const OrientationCandidates& candidates, double coherence_min);

DisparityField estimate_initial_disparity(const LightField4D& lf, const CameraConfig& cfg,
                                          const EpiDepthParams& params = {});

/// Depth in the config's length unit. Positive disparity means points shift
/// against the camera motion, i.e. du/dx = -disparity, so Z = A / (1 + d)
/// with A = cfg.separation(). Invalid or non-physical pixels are NaN.
Grid2D<double> disparity_to_depth_map(const DisparityField& field, const CameraConfig& cfg);

}  // namespace lfd
