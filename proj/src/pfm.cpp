#include "lfdepth/pfm.hpp"

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "lfdepth/error.hpp"

namespace lfd {
namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

// Reads one whitespace-delimited header token starting at `pos`.
std::string next_token(const std::string& bytes, std::size_t& pos, const std::string& path) {
  while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw ValidationError(path + ": malformed PFM header (unexpected end)");
  return bytes.substr(start, pos - start);
}

}  // namespace

Grid2D<float> read_pfm_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();

  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos, name);
  if (magic == "PF") throw ValidationError(name + ": color PFM ('PF') is not supported; expected 'Pf'");
  if (magic != "Pf") throw ValidationError(name + ": malformed PFM header (bad magic '" + magic + "')");

  int width = 0, height = 0;
  double scale = 0.0;
  try {
    std::size_t used = 0;
    const std::string w = next_token(bytes, pos, name);
    width = std::stoi(w, &used);
    if (used != w.size()) throw std::invalid_argument(w);
    const std::string h = next_token(bytes, pos, name);
    height = std::stoi(h, &used);
    if (used != h.size()) throw std::invalid_argument(h);
    const std::string s = next_token(bytes, pos, name);
    scale = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw ValidationError(name + ": malformed PFM header");
  }
  if (width <= 0 || height <= 0 || scale == 0.0) throw ValidationError(name + ": malformed PFM header values");
  // exactly one whitespace byte separates the header from the payload
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ValidationError(name + ": malformed PFM header (missing separator)");
  }
  ++pos;

  const std::size_t count = static_cast<std::size_t>(width) * height;
  if (bytes.size() - pos < count * 4) {
    throw IoError(name + ": truncated PFM payload (" + std::to_string(bytes.size() - pos) + " of " +
                  std::to_string(count * 4) + " bytes)");
  }
  const bool file_little = scale < 0.0;
  const bool swap = file_little != (std::endian::native == std::endian::little);

  Grid2D<float> out(width, height);
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;  // bottom row first
    for (int x = 0; x < width; ++x) {
      std::uint32_t bits;
      std::memcpy(&bits, bytes.data() + pos + (static_cast<std::size_t>(row) * width + x) * 4, 4);
      if (swap) bits = byteswap32(bits);
      out(x, y) = std::bit_cast<float>(bits);
    }
  }
  return out;
}

void write_pfm_grid(const Grid2D<float>& values, const std::filesystem::path& path) {
  if (values.empty()) throw ValidationError("write_pfm: empty map");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "Pf\n" << values.width() << ' ' << values.height() << "\n-1\n";
  std::string payload(values.size() * 4, '\0');
  std::size_t offset = 0;
  for (int y = values.height() - 1; y >= 0; --y) {
    for (int x = 0; x < values.width(); ++x) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(values(x, y));
      if constexpr (std::endian::native != std::endian::little) bits = byteswap32(bits);
      std::memcpy(payload.data() + offset, &bits, 4);
      offset += 4;
    }
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

DisparityField read_pfm(const std::filesystem::path& path) { return DisparityField::from_values(read_pfm_grid(path)); }

void write_pfm(const DisparityField& field, const std::filesystem::path& path) {
  write_pfm_grid(field.disparity, path);
}

}  // namespace lfd
