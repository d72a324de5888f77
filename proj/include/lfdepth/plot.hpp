#pragma once

// Residual-norm convergence plots rendered straight to RGB rasters.

#include <filesystem>
#include <vector>

#include "lfdepth/grid.hpp"

namespace lfd {

struct PlotOptions {
  int width = 640;
  int height = 400;
  int x_range = 300;  // iterations on the x axis; widened if the trace is longer
};

/// Pixel position of each plotted sample, index i at iteration i + 1.
struct PlotPoint {
  double x = 0.0;
  double y = 0.0;
};

struct ConvergencePlot {
  RgbImage image;
  std::vector<PlotPoint> points;  // finite positive samples only
  double y_min = 0.0;             // decade bounds of the log axis
  double y_max = 0.0;
};

/// Residual against iteration with a log-scaled y axis. Throws
/// ValidationError on an empty trace or one without positive finite values.
ConvergencePlot convergence_plot(const std::vector<double>& residuals, const PlotOptions& options = {});

/// residual_norm column of a trace CSV written by write_trace_csv.
std::vector<double> read_trace_residuals(const std::filesystem::path& path);

/// "iteration,residual_norm,primal_objective"; the last column is empty when
/// no objective was recorded.
void write_trace_csv(const std::filesystem::path& path, const std::vector<double>& residuals,
                     const std::vector<double>& objective);

}  // namespace lfd
