#pragma once

// 4D light fields L(u, v, x, y): U x V sub-aperture images of X x Y pixels,
// plus the epipolar-plane-image slices read from them.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfdepth/grid.hpp"

namespace lfd {

struct CameraConfig {
  double baseline = 1.0;      // mm between adjacent cameras
  double focal_length = 1.0;  // mm
  double sensor_width = 1.0;  // mm
  double disp_min = -4.0;     // px per adjacent view
  double disp_max = 4.0;
  int center_u = -1;  // -1: floor(U / 2)
  int center_v = -1;
  // Distance between the two parameterization planes; focal_length when unset.
  std::optional<double> plane_separation;
  // Array size when the config file states it (0 = unknown).
  int views_u = 0;
  int views_v = 0;

  /// Fills unset centers from the array size and checks field ranges.
  void resolve(int u_count, int v_count);
  void validate() const;
  double separation() const { return plane_separation.value_or(focal_length); }
};

/// Parses a flat key-value camera config. Accepts the CameraConfig field names
/// and the benchmark spellings (focal_length_mm, baseline_mm, sensor_size_mm,
/// num_cams_x, num_cams_y). Unknown keys land in `warnings`.
CameraConfig parse_camera_config(const std::string& text, const std::string& origin,
                                 std::vector<std::string>* warnings = nullptr);
CameraConfig load_camera_config(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

class LightField4D {
 public:
  LightField4D() = default;
  /// Samples in (v, u, y, x, channel) order, each in [0, 1].
  LightField4D(int views_u, int views_v, int width, int height, int channels, std::vector<float> samples);

  int views_u() const noexcept { return views_u_; }
  int views_v() const noexcept { return views_v_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  int center_u() const noexcept { return views_u_ / 2; }
  int center_v() const noexcept { return views_v_ / 2; }

  float at(int u, int v, int x, int y, int c = 0) const { return samples_[index(u, v, x, y, c)]; }
  std::span<const float> samples() const noexcept { return samples_; }

  /// One channel of sub-aperture image (u, v).
  Grid2D<float> view(int u, int v, int channel = 0) const;

  friend bool operator==(const LightField4D&, const LightField4D&) = default;

 private:
  std::size_t index(int u, int v, int x, int y, int c) const {
    return ((((static_cast<std::size_t>(v) * views_u_ + u) * height_ + y) * width_ + x) * channels_) + c;
  }

  int views_u_ = 0;
  int views_v_ = 0;
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> samples_;
};

/// File naming for the U*V views. `pattern` is a fmt format string receiving
/// the row-major view index v * U + u.
struct ViewLayout {
  std::string pattern = "input_Cam{:03d}.png";
  int views_u = 0;  // 0: from the config file, else inferred (square array)
  int views_v = 0;
  std::string config_name = "parameters.cfg";
  std::optional<std::filesystem::path> config_override;
};

struct LoadedLightField {
  LightField4D lightfield;
  CameraConfig config;
  std::vector<std::string> warnings;
};

LoadedLightField load_lightfield(const std::filesystem::path& directory, const ViewLayout& layout = {});

/// Luminance 0.299 R + 0.587 G + 0.114 B; single-channel input is returned as is.
LightField4D to_grayscale(const LightField4D& lf);

enum class EpiOrientation { kHorizontal, kVertical };

/// A 2D cut through the light field. Row a holds the scanline of angular
/// position a; column s is the spatial coordinate along that scanline.
struct EpiSlice {
  EpiOrientation orientation = EpiOrientation::kHorizontal;
  int fixed_spatial = 0;  // y* (horizontal) or x* (vertical)
  int fixed_angular = 0;  // v* (horizontal) or u* (vertical)
  Grid2D<double> data;    // width = spatial extent, height = angular extent

  int spatial_size() const noexcept { return data.width(); }
  int angular_size() const noexcept { return data.height(); }
  double at(int s, int a) const { return data(s, a); }
};

/// X x U slice with entry (x, u) = L(u, v*, x, y*). Requires grayscale input.
EpiSlice extract_epi_horizontal(const LightField4D& lf, int y_star, int v_star);
/// Y x V slice with entry (y, v) = L(u*, v, x*, y).
EpiSlice extract_epi_vertical(const LightField4D& lf, int x_star, int u_star);

/// Per-pixel disparity (px of shift between adjacent views) with confidence.
struct DisparityField {
  Grid2D<float> disparity;
  Grid2D<float> confidence;
  Grid2D<std::uint8_t> valid;

  DisparityField() = default;
  DisparityField(int width, int height)
      : disparity(width, height, 0.0f), confidence(width, height, 0.0f), valid(width, height, 0) {}

  int width() const noexcept { return disparity.width(); }
  int height() const noexcept { return disparity.height(); }

  /// Wraps a plain map: confidence 1 and valid wherever finite.
  static DisparityField from_values(Grid2D<float> values);
  void validate() const;
};

}  // namespace lfd
