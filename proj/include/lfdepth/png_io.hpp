#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lfdepth/grid.hpp"

namespace lfd {

/// Decoded PNG with samples normalized to [0, 1]: 8-bit data divided by 255,
/// 16-bit by 65535. Palette images are expanded; alpha is dropped.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  int bit_depth = 0;
  std::vector<float> samples;  // row-major, interleaved channels
};

PngImage read_png(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const RgbImage& image);
void write_png(const std::filesystem::path& path, const Grid2D<std::uint8_t>& gray);

/// Rounds [0, 1] floats to 8 bits (clamping out-of-range values).
Grid2D<std::uint8_t> to_gray8(const Grid2D<float>& image);

}  // namespace lfd
