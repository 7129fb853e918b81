#include "panostitch/io.hpp"

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

namespace panostitch::io {
namespace {

constexpr std::array<char, 6> kWssfMagic = {'W', 'S', 'S', 'F', '1', '\n'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

void put_u32le(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& is, const char* part) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string("WSSF1: truncated ") + part);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

unsigned char to_byte(float v) {
  if (!(v > 0.0f)) return 0;
  if (v >= 1.0f) return 255;
  return static_cast<unsigned char>(std::lround(v * 255.0f));
}

}  // namespace

ImageF read_png(const std::filesystem::path& path) {
  FilePtr fp = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng: read struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  const png_byte color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  std::vector<png_byte> buffer(static_cast<std::size_t>(height) * png_get_rowbytes(png, info));
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * png_get_rowbytes(png, info);
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3)
    throw std::runtime_error("unsupported PNG channel count in " + path.string());
  ImageF out(height, width, channels);
  for (std::size_t i = 0; i < out.size(); ++i) out.storage()[i] = buffer[i] / 255.0f;
  return out;
}

void write_png(const std::filesystem::path& path, const ImageF& image) {
  if (image.channels() != 1 && image.channels() != 3)
    throw DomainError("write_png: expected 1 or 3 channels");
  FilePtr fp = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("libpng: write struct allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8,
               image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * image.channels());
  for (int y = 0; y < image.height(); ++y) {
    const float* src = image.row(y);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = to_byte(src[i]);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  write_png(path, mask_to_image<float>(mask));
}

Mask read_mask_png(const std::filesystem::path& path) { return image_to_mask(read_png(path)); }

void write_wssf(const std::filesystem::path& path, const ImageF& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os.write(kWssfMagic.data(), kWssfMagic.size());
  put_u32le(os, static_cast<std::uint32_t>(map.height()));
  put_u32le(os, static_cast<std::uint32_t>(map.width()));
  put_u32le(os, static_cast<std::uint32_t>(map.channels()));
  for (float v : map.storage()) put_u32le(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ImageF read_wssf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 6> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kWssfMagic)
    throw std::runtime_error("not a WSSF1 file: " + path.string());
  const std::uint32_t h = get_u32le(is, "header");
  const std::uint32_t w = get_u32le(is, "header");
  const std::uint32_t c = get_u32le(is, "header");
  if (c == 0 || h > (1u << 16) || w > (1u << 16) || c > 64)
    throw std::runtime_error("WSSF1: implausible shape in " + path.string());
  ImageF out(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (float& v : out.storage()) v = std::bit_cast<float>(get_u32le(is, "payload"));
  return out;
}

ImageF read_image(const std::filesystem::path& path) {
  return path.extension() == ".wssf" ? read_wssf(path) : read_png(path);
}

}  // namespace panostitch::io
