#include "spinesim/image_io.hpp"

#include "spinesim/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace spinesim {

namespace {

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void png_read_from_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + length > cur->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(data, cur->bytes->data() + cur->pos, length);
  cur->pos += length;
}

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) {
  throw Error(ErrorKind::Contract, "bad_png", msg);
}

void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png16(const RadiographImage& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height) {
    contract_error("invalid_image", "image has no pixels");
  }
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                            png_warning_handler);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * 2);
  try {
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int j = 0; j < img.height; ++j) {
      for (int i = 0; i < img.width; ++i) {
        const double d = std::clamp(img.at(i, j), 0.0, 1.0);
        const auto v = static_cast<std::uint16_t>(std::lround(d * 65535.0));
        row[2 * i] = static_cast<std::uint8_t>(v >> 8);  // PNG is big-endian
        row[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png16(const RadiographImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_png16(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_error("write_failed", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) io_error("write_failed", "short write to " + path.string());
}

RadiographImage decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    contract_error("bad_png", "not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                           png_warning_handler);
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{&bytes, 0};
  RadiographImage img;
  try {
    png_set_read_fn(png, &cursor, png_read_from_vector);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) contract_error("bad_png", "only grayscale PNGs are supported");
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    const int bytes_per_px = depth == 16 ? 2 : 1;
    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    for (int j = 0; j < img.height; ++j) {
      png_read_row(png, row.data(), nullptr);
      for (int i = 0; i < img.width; ++i) {
        img.at(i, j) = bytes_per_px == 2
                           ? ((row[2 * i] << 8) | row[2 * i + 1]) / 65535.0
                           : row[i] / 255.0;
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

RadiographImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error("missing_file", "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace spinesim
