#pragma once

// Two-view scenes of planar patches with known motion, for alignment tests.
//
// The target camera sees X' = R (X - T) and plane t is {X : N_t' X = 1}, so
// the reference-to-target pixel map of patch t is Kc R (I - T N_t') Kc^-1.

#include <random>
#include <vector>

#include <Eigen/Core>

#include "lfdepth/alignment.hpp"

namespace lfd::testing {

struct PlanarScene {
  Eigen::Matrix3d kc = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector3d> normals;  // N_t, scaled by inverse distance
  int width = 128;
  int height = 128;

  Eigen::Matrix3d patch_matrix(int t) const;  // 1-based, unnormalized
  /// Exact state for the given basis patch.
  MotionState truth(int basis) const;

  static PlanarScene random(std::mt19937& rng, int planes, int width = 128, int height = 128);
};

/// counts[t-1] reference points for patch t, drawn in vertical strip t of the
/// image, mapped exactly and then perturbed by Gaussian noise of `sigma` px.
std::vector<Correspondence> sample_correspondences(const PlanarScene& scene, const std::vector<int>& counts,
                                                   double sigma, std::mt19937& rng);

}  // namespace lfd::testing
