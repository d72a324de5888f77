#include "lfdepth/lightfield.hpp"

#include <fmt/format.h>

#include <cmath>
#include <map>

#include "lfdepth/config.hpp"
#include "lfdepth/error.hpp"
#include "lfdepth/png_io.hpp"

namespace lfd {

void CameraConfig::resolve(int u_count, int v_count) {
  if (center_u < 0) center_u = u_count / 2;
  if (center_v < 0) center_v = v_count / 2;
  if (center_u >= u_count || center_v >= v_count) {
    throw ValidationError(fmt::format("camera config: center view ({}, {}) outside a {}x{} array", center_u,
                                      center_v, u_count, v_count));
  }
  validate();
}

void CameraConfig::validate() const {
  if (!(disp_min < disp_max)) {
    throw ValidationError(fmt::format("camera config: disp_min ({}) must be below disp_max ({})", disp_min, disp_max));
  }
  if (!(baseline > 0.0)) throw ValidationError("camera config: baseline must be positive");
  if (!(focal_length > 0.0)) throw ValidationError("camera config: focal_length must be positive");
  if (plane_separation && !(*plane_separation > 0.0)) {
    throw ValidationError("camera config: plane_separation must be positive");
  }
}

namespace {

CameraConfig config_from_entries(const KeyValueFile& kv, std::vector<std::string>* warnings) {
  const std::string& origin = kv.origin();
  CameraConfig cfg;
  // field name -> setter; benchmark spellings map onto the same fields
  const std::map<std::string, double CameraConfig::*> doubles = {
      {"baseline", &CameraConfig::baseline},         {"baseline_mm", &CameraConfig::baseline},
      {"focal_length", &CameraConfig::focal_length}, {"focal_length_mm", &CameraConfig::focal_length},
      {"sensor_width", &CameraConfig::sensor_width}, {"sensor_size_mm", &CameraConfig::sensor_width},
      {"disp_min", &CameraConfig::disp_min},         {"disp_max", &CameraConfig::disp_max},
  };
  const std::map<std::string, int CameraConfig::*> ints = {
      {"center_u", &CameraConfig::center_u},
      {"center_v", &CameraConfig::center_v},
      {"num_cams_x", &CameraConfig::views_u},
      {"num_cams_y", &CameraConfig::views_v},
      {"views_u", &CameraConfig::views_u},
      {"views_v", &CameraConfig::views_v},
  };
  for (const auto& [key, value] : kv.entries()) {
    if (auto it = doubles.find(key); it != doubles.end()) {
      cfg.*(it->second) = parse_double(value, key, origin);
    } else if (auto jt = ints.find(key); jt != ints.end()) {
      cfg.*(jt->second) = static_cast<int>(parse_int(value, key, origin));
    } else if (key == "plane_separation") {
      cfg.plane_separation = parse_double(value, key, origin);
    } else if (warnings != nullptr) {
      warnings->push_back(fmt::format("{}: ignoring unknown key '{}'", origin, key));
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace

CameraConfig parse_camera_config(const std::string& text, const std::string& origin,
                                 std::vector<std::string>* warnings) {
  return config_from_entries(KeyValueFile::parse(text, origin), warnings);
}

CameraConfig load_camera_config(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  return config_from_entries(KeyValueFile::load(path), warnings);
}

LightField4D::LightField4D(int views_u, int views_v, int width, int height, int channels, std::vector<float> samples)
    : views_u_(views_u), views_v_(views_v), width_(width), height_(height), channels_(channels),
      samples_(std::move(samples)) {
  if (views_u < 1 || views_v < 1 || width < 1 || height < 1) {
    throw ValidationError(
        fmt::format("light field: all extents must be >= 1 (U={} V={} X={} Y={})", views_u, views_v, width, height));
  }
  if (channels != 1 && channels != 3) throw ValidationError("light field: channels must be 1 or 3");
  const std::size_t expected = static_cast<std::size_t>(views_u) * views_v * width * height * channels;
  if (samples_.size() != expected) {
    throw ValidationError(fmt::format("light field: {} samples given, {} expected", samples_.size(), expected));
  }
  for (float s : samples_) {
    if (!(s >= 0.0f && s <= 1.0f)) throw ValidationError("light field: sample outside [0, 1]");
  }
}

Grid2D<float> LightField4D::view(int u, int v, int channel) const {
  if (u < 0 || u >= views_u_ || v < 0 || v >= views_v_ || channel < 0 || channel >= channels_) {
    throw ValidationError(fmt::format("light field: view ({}, {}, c{}) out of range", u, v, channel));
  }
  Grid2D<float> out(width_, height_);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) out(x, y) = at(u, v, x, y, channel);
  }
  return out;
}

LoadedLightField load_lightfield(const std::filesystem::path& directory, const ViewLayout& layout) {
  if (!std::filesystem::is_directory(directory)) throw IoError("not a directory: " + directory.string());
  LoadedLightField out;

  const std::filesystem::path cfg_path =
      layout.config_override ? *layout.config_override : directory / layout.config_name;
  if (std::filesystem::exists(cfg_path)) {
    out.config = load_camera_config(cfg_path, &out.warnings);
  } else if (layout.config_override) {
    throw IoError("config file not found: " + cfg_path.string());
  }

  auto view_path = [&](int index) {
    std::string name;
    try {
      name = fmt::format(fmt::runtime(layout.pattern), index);
    } catch (const fmt::format_error& e) {
      throw ValidationError("view pattern '" + layout.pattern + "': " + e.what());
    }
    return directory / name;
  };

  int u_count = layout.views_u > 0 ? layout.views_u : out.config.views_u;
  int v_count = layout.views_v > 0 ? layout.views_v : out.config.views_v;
  if (u_count <= 0 || v_count <= 0) {
    int present = 0;
    while (std::filesystem::exists(view_path(present))) ++present;
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(present))));
    if (present == 0) throw IoError("no view files matching '" + layout.pattern + "' in " + directory.string());
    if (side * side != present) {
      throw ValidationError(fmt::format("{} views found in {}; cannot infer a square array, set views_u/views_v",
                                        present, directory.string()));
    }
    u_count = v_count = side;
  }
  out.config.views_u = u_count;
  out.config.views_v = v_count;
  out.config.resolve(u_count, v_count);

  int width = 0, height = 0, channels = 0;
  std::vector<float> samples;
  for (int v = 0; v < v_count; ++v) {
    for (int u = 0; u < u_count; ++u) {
      const std::filesystem::path path = view_path(v * u_count + u);
      if (!std::filesystem::exists(path)) throw IoError("missing view file " + path.string());
      const PngImage img = read_png(path);
      if (samples.empty()) {
        width = img.width;
        height = img.height;
        channels = img.channels;
        samples.reserve(static_cast<std::size_t>(u_count) * v_count * width * height * channels);
      } else if (img.width != width || img.height != height || img.channels != channels) {
        throw ValidationError(fmt::format("{}: dimensions {}x{}x{} differ from first view {}x{}x{}", path.string(),
                                          img.width, img.height, img.channels, width, height, channels));
      }
      samples.insert(samples.end(), img.samples.begin(), img.samples.end());
    }
  }
  out.lightfield = LightField4D(u_count, v_count, width, height, channels, std::move(samples));
  return out;
}

LightField4D to_grayscale(const LightField4D& lf) {
  if (lf.channels() == 1) return lf;
  const auto src = lf.samples();
  std::vector<float> gray(src.size() / 3);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const double y = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    gray[i] = static_cast<float>(std::min(1.0, std::max(0.0, y)));
  }
  return LightField4D(lf.views_u(), lf.views_v(), lf.width(), lf.height(), 1, std::move(gray));
}

EpiSlice extract_epi_horizontal(const LightField4D& lf, int y_star, int v_star) {
  if (lf.channels() != 1) throw ValidationError("extract_epi_horizontal: light field must be grayscale");
  if (y_star < 0 || y_star >= lf.height() || v_star < 0 || v_star >= lf.views_v()) {
    throw ValidationError(fmt::format("extract_epi_horizontal: (y*={}, v*={}) outside Y={} V={}", y_star, v_star,
                                      lf.height(), lf.views_v()));
  }
  EpiSlice epi{EpiOrientation::kHorizontal, y_star, v_star, Grid2D<double>(lf.width(), lf.views_u())};
  for (int u = 0; u < lf.views_u(); ++u) {
    for (int x = 0; x < lf.width(); ++x) epi.data(x, u) = lf.at(u, v_star, x, y_star);
  }
  return epi;
}

EpiSlice extract_epi_vertical(const LightField4D& lf, int x_star, int u_star) {
  if (lf.channels() != 1) throw ValidationError("extract_epi_vertical: light field must be grayscale");
  if (x_star < 0 || x_star >= lf.width() || u_star < 0 || u_star >= lf.views_u()) {
    throw ValidationError(fmt::format("extract_epi_vertical: (x*={}, u*={}) outside X={} U={}", x_star, u_star,
                                      lf.width(), lf.views_u()));
  }
  EpiSlice epi{EpiOrientation::kVertical, x_star, u_star, Grid2D<double>(lf.height(), lf.views_v())};
  for (int v = 0; v < lf.views_v(); ++v) {
    for (int y = 0; y < lf.height(); ++y) epi.data(y, v) = lf.at(u_star, v, x_star, y);
  }
  return epi;
}

DisparityField DisparityField::from_values(Grid2D<float> values) {
  DisparityField f;
  f.confidence = Grid2D<float>(values.width(), values.height(), 1.0f);
  f.valid = Grid2D<std::uint8_t>(values.width(), values.height(), 0);
  for (std::size_t i = 0; i < values.size(); ++i) f.valid.values()[i] = std::isfinite(values.values()[i]) ? 1 : 0;
  f.disparity = std::move(values);
  return f;
}

void DisparityField::validate() const {
  if (!disparity.same_shape(confidence) || disparity.width() != valid.width() || disparity.height() != valid.height()) {
    throw ValidationError("disparity field: component shapes differ");
  }
  for (std::size_t i = 0; i < disparity.size(); ++i) {
    if (valid.values()[i] && !std::isfinite(disparity.values()[i])) {
      throw ValidationError("disparity field: non-finite disparity under the valid mask");
    }
    const float c = confidence.values()[i];
    if (!(c >= 0.0f && c <= 1.0f)) throw ValidationError("disparity field: confidence outside [0, 1]");
  }
}

}  // namespace lfd
