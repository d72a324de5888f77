#include "lfdepth/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "lfdepth/error.hpp"

namespace lfd {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp, png_const_charp message) { throw IoError(message); }
void png_warning_handler(png_structp, png_const_charp) {}

void write_rows(const std::filesystem::path& path, int width, int height, int color_type,
                const std::vector<png_bytep>& rows) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  if (png == nullptr) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  try {
    if (info == nullptr) throw IoError("png_create_info_struct failed");
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
  } catch (const IoError& e) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": " + e.what());
  }
  png_destroy_write_struct(&png, &info);
}

}  // namespace

PngImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  unsigned char signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw IoError(path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  if (png == nullptr) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  PngImage out;
  try {
    if (info == nullptr) throw IoError("png_create_info_struct failed");
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
      png_set_palette_to_rgb(png);
      bit_depth = 8;
    }
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
      bit_depth = 8;
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // host-order (little endian) 16-bit samples
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    if (out.channels != 1 && out.channels != 3) {
      throw IoError("unsupported channel count " + std::to_string(out.channels));
    }
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<unsigned char> buffer(rowbytes * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> rows(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
    out.samples.resize(count);
    if (out.bit_depth == 16) {
      for (int y = 0; y < out.height; ++y) {
        const auto* row = reinterpret_cast<const std::uint16_t*>(rows[y]);
        for (int i = 0; i < out.width * out.channels; ++i) {
          out.samples[static_cast<std::size_t>(y) * out.width * out.channels + i] = row[i] / 65535.0f;
        }
      }
    } else {
      for (int y = 0; y < out.height; ++y) {
        for (int i = 0; i < out.width * out.channels; ++i) {
          out.samples[static_cast<std::size_t>(y) * out.width * out.channels + i] = rows[y][i] / 255.0f;
        }
      }
    }
  } catch (const IoError& e) {
    png_destroy_read_struct(&png, &info, nullptr);
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw IoError(path.string() + ": " + msg);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  std::vector<unsigned char> buffer(image.size() * 3);
  for (std::size_t i = 0; i < image.size(); ++i) {
    buffer[3 * i] = image.values()[i].r;
    buffer[3 * i + 1] = image.values()[i].g;
    buffer[3 * i + 2] = image.values()[i].b;
  }
  std::vector<png_bytep> rows(image.height());
  for (int y = 0; y < image.height(); ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * image.width() * 3;
  write_rows(path, image.width(), image.height(), PNG_COLOR_TYPE_RGB, rows);
}

void write_png(const std::filesystem::path& path, const Grid2D<std::uint8_t>& gray) {
  std::vector<unsigned char> buffer(gray.values().begin(), gray.values().end());
  std::vector<png_bytep> rows(gray.height());
  for (int y = 0; y < gray.height(); ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * gray.width();
  write_rows(path, gray.width(), gray.height(), PNG_COLOR_TYPE_GRAY, rows);
}

Grid2D<std::uint8_t> to_gray8(const Grid2D<float>& image) {
  Grid2D<std::uint8_t> out(image.width(), image.height());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image.values()[i], 0.0f, 1.0f);
    out.values()[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

}  // namespace lfd
