#pragma once

// High-accuracy disparity metrics and the diagnostic images built on them.
//
// Errors are |d - gt|. A non-finite estimate counts as an infinite error;
// pixels whose ground truth is non-finite are dropped from the mask.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lfdepth/grid.hpp"

namespace lfd {

using EvalMask = Grid2D<std::uint8_t>;

EvalMask full_mask(int width, int height);
Grid2D<double> to_double(const Grid2D<float>& grid);

/// Per-pixel |d - gt|; +inf where d is not finite, NaN where gt is not finite.
Grid2D<double> abs_error(const Grid2D<double>& d, const Grid2D<double>& gt);

/// Percentage of mask pixels with error strictly greater than tau.
double badpix(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask, double tau = 0.07);
/// Mean squared error over the mask, times 100.
double mse100(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask);
/// Largest error among the best quarter of mask pixels (rank ceil(|M| / 4) of
/// the ascending sort), times 100. Needs at least 4 pixels.
double q25(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask);

/// (tau, 100 - badpix(tau)) for ascending positive taus.
std::vector<std::pair<double, double>> threshold_curve(const Grid2D<double>& d, const Grid2D<double>& gt,
                                                       const EvalMask& mask, const std::vector<double>& taus);

struct MetricsReport {
  double tau = 0.07;
  double badpix = 0.0;
  double badpix_003 = 0.0;
  double mse100 = 0.0;
  double q25 = 0.0;
  std::size_t mask_pixels = 0;
  Grid2D<double> pixel_abs_error;
};

MetricsReport evaluate(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask, double tau = 0.07);

/// metric,value rows: badpix_<tau>, badpix_0.03, mse100, q25, mask_pixels.
std::string metrics_csv(const MetricsReport& report);

/// Text table, one row per labelled run, in the benchmark's
/// "Average values of metric per algorithm" layout.
std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

inline constexpr Rgb8 kGoodPixel{0, 160, 0};
inline constexpr Rgb8 kBadPixel{200, 0, 0};
inline constexpr Rgb8 kOutsideMask{128, 128, 128};

/// Green where the error is within tau, red above it, gray outside the mask.
RgbImage badpix_visualization(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask,
                              double tau = 0.07);

/// Diverging map of gt - d clipped to [-clip, clip]: white at zero, red where
/// the estimate is too far (smaller disparity), blue where it is too close.
/// Non-finite pixels are gray.
RgbImage signed_error_visualization(const Grid2D<double>& d, const Grid2D<double>& gt, double clip = 0.2);

struct MedianErrorMap {
  Grid2D<double> difference;  // median over algorithms minus this algorithm's error
  RgbImage image;
};

/// Green where this algorithm beats the median, yellow at parity, red where it
/// is worse; saturates at |difference| = clip.
MedianErrorMap median_error_map(const std::vector<Grid2D<double>>& abs_errors, std::size_t index, double clip = 0.1);

struct DifficultyHeatmap {
  Grid2D<double> fraction;     // share of algorithms with a bad pixel
  Grid2D<std::uint8_t> image;  // round(255 * fraction)
};

DifficultyHeatmap difficulty_heatmap(const std::vector<Grid2D<std::uint8_t>>& bad_masks);

/// 1 where |d - gt| > tau (or d is not finite) inside the mask.
Grid2D<std::uint8_t> bad_pixel_mask(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask,
                                    double tau = 0.07);

}  // namespace lfd
