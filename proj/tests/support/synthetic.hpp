#pragma once

// Synthetic light fields with known disparity for tests.
//
// A view at angular offset (s, t) from the center sees the center-view point
// (xc, yc) at x = xc - d * s, y = yc - d * t, the same convention as the
// library. Layers are planes in disparity space, tested front to back.

#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "lfdepth/grid.hpp"
#include "lfdepth/lightfield.hpp"

namespace lfd::testing {

/// Band-limited texture: 0.5 + sum of sinusoids, values within [0.1, 0.9].
struct Texture {
  struct Wave {
    double fx, fy, phase, amplitude;
  };
  std::vector<Wave> waves;

  double operator()(double x, double y) const;
  static Texture random(std::mt19937& rng, int count = 6, double max_frequency = 0.15);
};

struct PlaneLayer {
  double d0 = 0.0;  // disparity d(xc, yc) = d0 + dx * xc + dy * yc
  double dx = 0.0;
  double dy = 0.0;
  std::function<bool(double, double)> region;  // empty: covers everything
  Texture texture;

  double disparity(double xc, double yc) const { return d0 + dx * xc + dy * yc; }
};

struct Scene {
  int views = 9;
  int width = 64;
  int height = 64;
  std::vector<PlaneLayer> layers;
  int supersample = 2;
  double noise_sigma = 0.0;
  unsigned noise_seed = 1;
};

LightField4D render(const Scene& scene);
Grid2D<float> center_disparity(const Scene& scene);
CameraConfig config_for(const Scene& scene, double disp_min = -2.0, double disp_max = 2.0);

/// Fronto-parallel foreground rectangle over a fronto-parallel background.
Scene two_plane_scene(unsigned seed, int views, int size);

/// EPI of given size whose iso-intensity lines satisfy s = s0 + slope * (a - a_center).
Grid2D<double> synthetic_epi(int spatial, int angular, double slope, const Texture& texture);

/// Piecewise-constant map with a few rectangular regions of distinct values.
Grid2D<double> piecewise_constant_map(unsigned seed, int width, int height);

/// Scene directory in benchmark layout: input_Cam000.png ... (8-bit),
/// parameters.cfg and, when `with_gt`, gt_disp_lowres.pfm.
void write_scene(const Scene& scene, const std::filesystem::path& dir, bool with_gt = true);

}  // namespace lfd::testing
