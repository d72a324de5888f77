#include "lfdepth/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "lfdepth/error.hpp"

namespace lfd {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_shapes(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask) {
  if (!d.same_shape(gt) || d.width() != mask.width() || d.height() != mask.height()) {
    throw ValidationError(fmt::format("metrics: shape mismatch (estimate {}x{}, ground truth {}x{}, mask {}x{})",
                                      d.width(), d.height(), gt.width(), gt.height(), mask.width(), mask.height()));
  }
}

// Errors of the effective mask: pixels with mask set and finite ground truth.
std::vector<double> masked_errors(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask) {
  check_shapes(d, gt, mask);
  std::vector<double> errors;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!mask.values()[i] || !std::isfinite(gt.values()[i])) continue;
    const double e = d.values()[i];
    errors.push_back(std::isfinite(e) ? std::abs(e - gt.values()[i]) : kInf);
  }
  if (errors.empty()) throw ValidationError("metrics: evaluation mask is empty");
  return errors;
}

Rgb8 lerp(Rgb8 a, Rgb8 b, double t) {
  auto mix = [t](unsigned char x, unsigned char y) {
    return static_cast<unsigned char>(std::lround(x + (static_cast<double>(y) - x) * t));
  };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

std::string format_tau(double tau) { return fmt::format("{:g}", tau); }

}  // namespace

EvalMask full_mask(int width, int height) { return EvalMask(width, height, 1); }

Grid2D<double> to_double(const Grid2D<float>& grid) {
  Grid2D<double> out(grid.width(), grid.height());
  std::copy(grid.values().begin(), grid.values().end(), out.values().begin());
  return out;
}

Grid2D<double> abs_error(const Grid2D<double>& d, const Grid2D<double>& gt) {
  if (!d.same_shape(gt)) throw ValidationError("abs_error: shape mismatch");
  Grid2D<double> out(d.width(), d.height());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double g = gt.values()[i], e = d.values()[i];
    if (!std::isfinite(g)) out.values()[i] = std::numeric_limits<double>::quiet_NaN();
    else out.values()[i] = std::isfinite(e) ? std::abs(e - g) : kInf;
  }
  return out;
}

double badpix(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask, double tau) {
  if (!(tau > 0.0)) throw ValidationError("badpix: tau must be positive");
  const auto errors = masked_errors(d, gt, mask);
  const auto bad = std::count_if(errors.begin(), errors.end(), [tau](double e) { return e > tau; });
  return 100.0 * static_cast<double>(bad) / static_cast<double>(errors.size());
}

double mse100(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask) {
  const auto errors = masked_errors(d, gt, mask);
  // Scaling before squaring keeps decimal inputs such as 0.1 exact at x100.
  double sum = 0.0;
  for (double e : errors) sum += (10.0 * e) * (10.0 * e);
  return sum / static_cast<double>(errors.size());
}

double q25(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask) {
  auto errors = masked_errors(d, gt, mask);
  if (errors.size() < 4) {
    throw ValidationError(fmt::format("q25: needs at least 4 mask pixels, got {}", errors.size()));
  }
  const std::size_t rank = (errors.size() + 3) / 4;
  std::nth_element(errors.begin(), errors.begin() + static_cast<long>(rank - 1), errors.end());
  return errors[rank - 1] * 100.0;
}

std::vector<std::pair<double, double>> threshold_curve(const Grid2D<double>& d, const Grid2D<double>& gt,
                                                       const EvalMask& mask, const std::vector<double>& taus) {
  for (std::size_t k = 0; k < taus.size(); ++k) {
    if (!(taus[k] > 0.0)) throw ValidationError("threshold_curve: thresholds must be positive");
    if (k > 0 && !(taus[k] > taus[k - 1])) throw ValidationError("threshold_curve: thresholds must ascend");
  }
  std::vector<std::pair<double, double>> out;
  out.reserve(taus.size());
  for (double tau : taus) out.emplace_back(tau, 100.0 - badpix(d, gt, mask, tau));
  return out;
}

MetricsReport evaluate(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask, double tau) {
  MetricsReport r;
  r.tau = tau;
  r.badpix = badpix(d, gt, mask, tau);
  r.badpix_003 = badpix(d, gt, mask, 0.03);
  r.mse100 = mse100(d, gt, mask);
  r.q25 = q25(d, gt, mask);
  r.mask_pixels = masked_errors(d, gt, mask).size();
  r.pixel_abs_error = abs_error(d, gt);
  return r;
}

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "metric,value\n";
  out += fmt::format("badpix_{},{}\n", format_tau(report.tau), report.badpix);
  out += fmt::format("badpix_0.03,{}\n", report.badpix_003);
  out += fmt::format("mse100,{}\n", report.mse100);
  out += fmt::format("q25,{}\n", report.q25);
  out += fmt::format("mask_pixels,{}\n", report.mask_pixels);
  return out;
}

std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::size_t label_width = 9;
  for (const auto& [label, _] : rows) label_width = std::max(label_width, label.size());
  const double tau = rows.empty() ? 0.07 : rows.front().second.tau;
  std::string out = "Average values of metric per algorithm\n";
  const std::string h1 = fmt::format("BadPix({})", format_tau(tau));
  out += fmt::format("{:<{}}  {:>12}  {:>12}  {:>10}  {:>10}\n", "Algorithm", label_width, h1, "BadPix(0.03)",
                     "MSE*100", "Q25");
  for (const auto& [label, r] : rows) {
    out += fmt::format("{:<{}}  {:>12.2f}  {:>12.2f}  {:>10.2f}  {:>10.2f}\n", label, label_width, r.badpix,
                       r.badpix_003, r.mse100, r.q25);
  }
  if (rows.size() > 1) {
    double b = 0, b3 = 0, m = 0, q = 0;
    for (const auto& [_, r] : rows) {
      b += r.badpix;
      b3 += r.badpix_003;
      m += r.mse100;
      q += r.q25;
    }
    const double n = static_cast<double>(rows.size());
    out += fmt::format("{:<{}}  {:>12.2f}  {:>12.2f}  {:>10.2f}  {:>10.2f}\n", "Average", label_width, b / n, b3 / n,
                       m / n, q / n);
  }
  return out;
}

Grid2D<std::uint8_t> bad_pixel_mask(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask,
                                    double tau) {
  check_shapes(d, gt, mask);
  Grid2D<std::uint8_t> out(d.width(), d.height(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!mask.values()[i] || !std::isfinite(gt.values()[i])) continue;
    const double e = d.values()[i];
    out.values()[i] = !std::isfinite(e) || std::abs(e - gt.values()[i]) > tau ? 1 : 0;
  }
  return out;
}

RgbImage badpix_visualization(const Grid2D<double>& d, const Grid2D<double>& gt, const EvalMask& mask, double tau) {
  const auto bad = bad_pixel_mask(d, gt, mask, tau);
  RgbImage out(d.width(), d.height(), kOutsideMask);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!mask.values()[i] || !std::isfinite(gt.values()[i])) continue;
    out.values()[i] = bad.values()[i] ? kBadPixel : kGoodPixel;
  }
  return out;
}

RgbImage signed_error_visualization(const Grid2D<double>& d, const Grid2D<double>& gt, double clip) {
  if (!(clip > 0.0)) throw ValidationError("signed_error_visualization: clip must be positive");
  if (!d.same_shape(gt)) throw ValidationError("signed_error_visualization: shape mismatch");
  RgbImage out(d.width(), d.height(), kOutsideMask);
  const Rgb8 white{255, 255, 255}, red{255, 0, 0}, blue{0, 0, 255};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double e = gt.values()[i] - d.values()[i];
    if (!std::isfinite(e)) continue;
    const double t = std::min(std::abs(e) / clip, 1.0);
    out.values()[i] = lerp(white, e >= 0.0 ? red : blue, t);
  }
  return out;
}

MedianErrorMap median_error_map(const std::vector<Grid2D<double>>& abs_errors, std::size_t index, double clip) {
  if (abs_errors.size() < 2) throw ValidationError("median_error_map: needs at least two algorithms");
  if (index >= abs_errors.size()) throw ValidationError("median_error_map: algorithm index out of range");
  if (!(clip > 0.0)) throw ValidationError("median_error_map: clip must be positive");
  const auto& first = abs_errors.front();
  for (const auto& e : abs_errors) {
    if (!e.same_shape(first)) throw ValidationError("median_error_map: error maps differ in size");
  }
  MedianErrorMap out{Grid2D<double>(first.width(), first.height()), RgbImage(first.width(), first.height())};
  const Rgb8 yellow{255, 255, 0};
  std::vector<double> column(abs_errors.size());
  const std::size_t k = abs_errors.size();
  for (std::size_t i = 0; i < first.size(); ++i) {
    for (std::size_t a = 0; a < k; ++a) column[a] = abs_errors[a].values()[i];
    std::sort(column.begin(), column.end());
    const double median = k % 2 ? column[k / 2] : 0.5 * (column[k / 2 - 1] + column[k / 2]);
    const double diff = median - abs_errors[index].values()[i];
    out.difference.values()[i] = diff;
    if (!std::isfinite(diff)) {
      out.image.values()[i] = kOutsideMask;
      continue;
    }
    const double t = std::min(std::abs(diff) / clip, 1.0);
    out.image.values()[i] = lerp(yellow, diff >= 0.0 ? kGoodPixel : kBadPixel, t);
  }
  return out;
}

DifficultyHeatmap difficulty_heatmap(const std::vector<Grid2D<std::uint8_t>>& bad_masks) {
  if (bad_masks.empty()) throw ValidationError("difficulty_heatmap: no algorithms given");
  const auto& first = bad_masks.front();
  for (const auto& m : bad_masks) {
    if (!m.same_shape(first)) throw ValidationError("difficulty_heatmap: masks differ in size");
  }
  DifficultyHeatmap out{Grid2D<double>(first.width(), first.height()),
                        Grid2D<std::uint8_t>(first.width(), first.height())};
  for (std::size_t i = 0; i < first.size(); ++i) {
    int bad = 0;
    for (const auto& m : bad_masks) bad += m.values()[i] ? 1 : 0;
    const double f = static_cast<double>(bad) / static_cast<double>(bad_masks.size());
    out.fraction.values()[i] = f;
    out.image.values()[i] = static_cast<std::uint8_t>(std::lround(255.0 * f));
  }
  return out;
}

}  // namespace lfd
