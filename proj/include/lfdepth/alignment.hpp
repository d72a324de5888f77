#pragma once

// Camera-array alignment with per-plane homographies sharing one motion.
//
// For plane patch t the map from reference to target pixels is
//   H_t ~ H1 + K dN_t',
// where H1 is the basis-patch homography (h33 = 1), K a 3-vector and dN_t the
// patch's normal offset from the basis plane. dN of the basis patch is zero.
// The solver alternates two linear least-squares steps: dN_t given (H1, K),
// then (H1, K) given all dN_t.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "lfdepth/grid.hpp"
#include "lfdepth/lightfield.hpp"

namespace lfd {

class Homography {
 public:
  Homography() : h_(Eigen::Matrix3d::Identity()) {}
  /// Scales m so that m(2, 2) = 1. Throws ValidationError when m(2, 2) is
  /// zero or the normalized determinant is below 1e-12 in magnitude.
  explicit Homography(const Eigen::Matrix3d& m);

  const Eigen::Matrix3d& matrix() const noexcept { return h_; }
  bool is_identity() const { return h_ == Eigen::Matrix3d::Identity(); }

  /// Homogeneous image of (x, y, 1); the caller divides.
  Eigen::Vector3d apply_homogeneous(const Eigen::Vector2d& p) const { return h_ * p.homogeneous(); }
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return apply_homogeneous(p).hnormalized(); }

 private:
  Eigen::Matrix3d h_;
};

struct Correspondence {
  Eigen::Vector2d p = Eigen::Vector2d::Zero();        // reference pixel
  Eigen::Vector2d p_prime = Eigen::Vector2d::Zero();  // target pixel
  int patch_id = 1;                                   // 1-based plane index
};

void validate_correspondences(const std::vector<Correspondence>& corrs);

/// Highest patch id present.
int patch_count(const std::vector<Correspondence>& corrs);

struct MotionState {
  Homography h1;
  Eigen::Vector3d k = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector3d> delta_normals;  // index t - 1
  std::vector<double> scale_d;                 // d_t, the (3,3) entry before renormalization
  int basis_patch = 1;

  int plane_count() const noexcept { return static_cast<int>(delta_normals.size()); }
  /// 8 for H1 and K up to scale plus 3 per further plane.
  int parameter_count() const noexcept { return 8 + 3 * (plane_count() - 1); }

  /// Single plane, H1 = I, K = 0.
  static MotionState identity(int planes = 1);
};

/// H_t = H1 + K dN_t', renormalized to h33 = 1. Throws NumericalError when singular.
Homography compose_patch_homography(const MotionState& state, int t);
/// Fills state.scale_d with the (3,3) entry of H1 + K dN_t' for every plane.
void update_scales(MotionState& state);

enum class PatchStatus { kOk, kRankDeficient, kDegenerateTranslation };
const char* to_string(PatchStatus status);

struct DeltaNormalSolution {
  std::vector<Eigen::Vector3d> delta_normals;
  std::vector<PatchStatus> status;
  std::vector<double> residuals;  // per patch, in normalized coordinates
  bool degenerate_translation = false;
};

/// dN_t for every non-basis patch with H1 and K fixed. Every such patch needs
/// at least 3 correspondences.
DeltaNormalSolution solve_delta_normals(const MotionState& state, const std::vector<Correspondence>& corrs);
/// Sum of squared residuals of the dN step for patch t at the state's current dN_t.
double delta_normal_residual(const MotionState& state, const std::vector<Correspondence>& corrs, int t);

struct GlobalMotionSolution {
  Homography h1;
  Eigen::Vector3d k = Eigen::Vector3d::Zero();
  int rank = 0;            // of the 11-column system
  double condition = 0.0;  // largest over smallest nonzero singular value
  double residual = 0.0;   // sum of squares, normalized coordinates
  bool rank_deficient = false;
};

/// (h1..h8, k1..k3) with every dN_t fixed. Needs at least 6 correspondences.
/// A rank-deficient system gets the minimum-norm solution.
GlobalMotionSolution solve_global_motion(const std::vector<Eigen::Vector3d>& delta_normals,
                                         const std::vector<Correspondence>& corrs);
/// Sum of squared residuals of the global step at the state's current H1, K.
double global_motion_residual(const MotionState& state, const std::vector<Correspondence>& corrs);

struct ReprojectionError {
  double mean = 0.0;  // pixels
  int used = 0;
  int excluded = 0;   // homogeneous coordinate ~ 0
};

ReprojectionError reprojection_error(const Homography& h, const std::vector<Correspondence>& corrs);
/// Each correspondence projected with its own patch homography.
ReprojectionError reprojection_error(const MotionState& state, const std::vector<Correspondence>& corrs);

/// Normalized DLT fit, at least 4 correspondences.
Homography fit_homography(const std::vector<Correspondence>& corrs);

struct AlignParams {
  double threshold = 0.5;  // px, mean reprojection error
  int max_iter = 50;
  bool identity = false;   // skip estimation, leave views untouched
  int threads = 1;

  void validate() const;
};

struct ViewAlignment {
  MotionState state;
  std::vector<double> error_trace;  // mean reprojection error after each outer iteration
  int iterations = 0;
  bool converged = false;
  bool degenerate_translation = false;
  int rank_deficient_solves = 0;
  double condition = 0.0;  // of the last global step
};

/// Alternating solve for one target view.
ViewAlignment align_view(const std::vector<Correspondence>& corrs, const AlignParams& params = {});

struct ArrayAlignment {
  LightField4D aligned;
  std::vector<ViewAlignment> views;  // index v * U + u; the reference view is the identity
  double mean_error = 0.0;           // over all non-reference views
  bool converged = true;             // false: some view stopped at max_iter (best state kept)
};

/// `corrs` holds one list per view, index v * U + u, between the center view
/// and that view. Each view is resampled at H1 of its own state so that the
/// basis plane lands on the reference pixel grid.
ArrayAlignment align_array(const LightField4D& lf, const std::vector<std::vector<Correspondence>>& corrs,
                           const AlignParams& params = {});

/// out(x, y) = bilinear sample of src at h(x, y), edge-clamped. The identity
/// returns src unchanged.
Grid2D<float> warp_image(const Grid2D<float>& src, const Homography& h);
LightField4D warp_lightfield(const LightField4D& lf, const std::vector<Homography>& per_view);

/// One match per line: "t p1 p2 p1' p2'". Blank lines and '#' comments are skipped.
std::vector<Correspondence> parse_correspondences(const std::string& text, const std::string& origin);
std::vector<Correspondence> read_correspondences(const std::filesystem::path& path);
void write_correspondences(const std::filesystem::path& path, const std::vector<Correspondence>& corrs);

struct MatchParams {
  int max_corners = 300;
  int window_radius = 4;
  int search_radius = 8;
  double min_ncc = 0.9;
  double harris_k = 0.04;
  double harris_sigma = 1.5;
  int suppression_radius = 4;
};

/// Harris corners in the reference matched into the target by normalized
/// cross-correlation with parabolic sub-pixel refinement. All matches go to patch 1.
std::vector<Correspondence> match_features(const Grid2D<float>& reference, const Grid2D<float>& target,
                                           const MatchParams& params = {});

}  // namespace lfd
