#pragma once

// Portable float map: "Pf\n<width> <height>\n<scale>\n" followed by
// width*height 32-bit floats, bottom row first. A negative scale marks
// little-endian data. Only the single-channel "Pf" variant is supported.

#include <filesystem>

#include "lfdepth/grid.hpp"
#include "lfdepth/lightfield.hpp"

namespace lfd {

Grid2D<float> read_pfm_grid(const std::filesystem::path& path);
void write_pfm_grid(const Grid2D<float>& values, const std::filesystem::path& path);

/// Disparity with confidence 1 and valid = finite.
DisparityField read_pfm(const std::filesystem::path& path);
/// Writes the disparity channel only.
void write_pfm(const DisparityField& field, const std::filesystem::path& path);

}  // namespace lfd
