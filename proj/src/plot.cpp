#include "lfdepth/plot.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "lfdepth/error.hpp"

namespace lfd {
namespace {

constexpr Rgb8 kBackground{255, 255, 255};
constexpr Rgb8 kAxis{0, 0, 0};
constexpr Rgb8 kGrid{220, 220, 220};
constexpr Rgb8 kCurve{20, 80, 200};

// 3x5 glyphs, one row per 3-bit mask, top row first.
struct Glyph {
  char c;
  std::array<unsigned char, 5> rows;
};

constexpr std::array<Glyph, 14> kFont{{
    {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 3, 1, 7}},
    {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 2, 2}},
    {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'e', {0, 7, 7, 4, 7}}, {'-', {0, 0, 7, 0, 0}},
    {'+', {0, 2, 7, 2, 0}}, {'.', {0, 0, 0, 0, 2}},
}};

void put(RgbImage& img, int x, int y, Rgb8 c) {
  if (x >= 0 && y >= 0 && x < img.width() && y < img.height()) img(x, y) = c;
}

void text(RgbImage& img, int x, int y, const std::string& s, int scale = 2) {
  for (char ch : s) {
    const auto it = std::find_if(kFont.begin(), kFont.end(), [ch](const Glyph& g) { return g.c == ch; });
    if (it != kFont.end()) {
      for (int r = 0; r < 5; ++r) {
        for (int b = 0; b < 3; ++b) {
          if (!(it->rows[r] & (4 >> b))) continue;
          for (int dy = 0; dy < scale; ++dy) {
            for (int dx = 0; dx < scale; ++dx) put(img, x + b * scale + dx, y + r * scale + dy, kAxis);
          }
        }
      }
    }
    x += 4 * scale;
  }
}

void line(RgbImage& img, double x0, double y0, double x1, double y1, Rgb8 c) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    put(img, static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

}  // namespace

ConvergencePlot convergence_plot(const std::vector<double>& residuals, const PlotOptions& options) {
  if (residuals.empty()) throw ValidationError("convergence_plot: empty trace");
  if (options.width < 120 || options.height < 80 || options.x_range < 1) {
    throw ValidationError("convergence_plot: plot too small or empty x range");
  }
  double lo = INFINITY, hi = -INFINITY;
  for (double r : residuals) {
    if (std::isfinite(r) && r > 0.0) {
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  }
  if (!(lo <= hi)) throw ValidationError("convergence_plot: trace has no positive finite residuals");

  ConvergencePlot out;
  int e_lo = static_cast<int>(std::floor(std::log10(lo)));
  int e_hi = static_cast<int>(std::ceil(std::log10(hi)));
  if (e_hi == e_lo) ++e_hi;
  out.y_min = std::pow(10.0, e_lo);
  out.y_max = std::pow(10.0, e_hi);

  const int left = 64, right = 16, top = 16, bottom = 36;
  const int pw = options.width - left - right, ph = options.height - top - bottom;
  const int x_range = std::max(options.x_range, static_cast<int>(residuals.size()));
  auto px = [&](double it) { return left + pw * (it / x_range); };
  auto py = [&](double v) { return top + ph * (e_hi - std::log10(v)) / (e_hi - e_lo); };

  out.image = RgbImage(options.width, options.height, kBackground);
  RgbImage& img = out.image;
  const int decade_step = std::max(1, (e_hi - e_lo + 7) / 8);
  for (int e = e_lo; e <= e_hi; e += decade_step) {
    const double y = py(std::pow(10.0, e));
    line(img, left, y, left + pw, y, kGrid);
    text(img, 4, static_cast<int>(y) - 5, fmt::format("1e{}", e));
  }
  const int x_step = x_range <= 300 ? 50 : static_cast<int>(std::ceil(x_range / 6.0 / 50.0)) * 50;
  for (int it = 0; it <= x_range; it += x_step) {
    const double x = px(it);
    line(img, x, top, x, top + ph, kGrid);
    const std::string label = std::to_string(it);
    text(img, static_cast<int>(x) - 4 * static_cast<int>(label.size()), top + ph + 8, label);
  }
  line(img, left, top, left, top + ph, kAxis);
  line(img, left, top + ph, left + pw, top + ph, kAxis);

  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const double r = residuals[i];
    if (!std::isfinite(r) || r <= 0.0) continue;
    out.points.push_back({px(static_cast<double>(i + 1)), py(r)});
  }
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    const auto& p = out.points[i];
    if (i > 0) line(img, out.points[i - 1].x, out.points[i - 1].y, p.x, p.y, kCurve);
    put(img, static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)), kCurve);
  }
  return out;
}

std::vector<double> read_trace_residuals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open trace {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(fmt::format("{}: empty trace file", path.string()));
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) header.push_back(col);
  }
  const auto col = std::find(header.begin(), header.end(), "residual_norm");
  if (col == header.end()) throw ValidationError(fmt::format("{}: no residual_norm column", path.string()));
  const std::size_t index = static_cast<std::size_t>(col - header.begin());
  std::vector<double> out;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> fields;
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() <= index) throw ValidationError(fmt::format("{}:{}: missing residual", path.string(), number));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(fields[index], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != fields[index].size()) {
      throw ValidationError(fmt::format("{}:{}: bad residual '{}'", path.string(), number, fields[index]));
    }
    out.push_back(v);
  }
  return out;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<double>& residuals,
                     const std::vector<double>& objective) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write trace {}", path.string()));
  out << "iteration,residual_norm,primal_objective\n";
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    out << fmt::format("{},{},", i + 1, residuals[i]);
    if (i < objective.size()) out << fmt::format("{}", objective[i]);
    out << '\n';
  }
  if (!out) throw IoError(fmt::format("write failed: {}", path.string()));
}

}  // namespace lfd
