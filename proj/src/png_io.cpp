#include "anglseg/io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

namespace anglseg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError(path, std::string("cannot open for ") + (mode[0] == 'r' ? "reading" : "writing"));
  return f;
}

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngWriter() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png) info = png_create_info_struct(png);
  }
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngReader() {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png) info = png_create_info_struct(png);
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

// libpng reports errors through longjmp; only trivially destructible locals
// live between setjmp and the libpng calls below.
bool write_png(std::FILE* f, std::size_t height, std::size_t width, int color_type, const std::vector<Rgb>* palette,
               const std::vector<png_bytep>& rows) {
  PngWriter w;
  if (!w.png || !w.info) return false;
  if (setjmp(png_jmpbuf(w.png))) return false;
  png_init_io(w.png, f);
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (palette) {
    png_set_PLTE(w.png, w.info, reinterpret_cast<png_const_colorp>(palette->data()), static_cast<int>(palette->size()));
  }
  png_write_info(w.png, w.info);
  png_write_image(w.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(w.png, nullptr);
  return true;
}

struct DecodedPng {
  png_uint_32 height = 0;
  png_uint_32 width = 0;
  int color_type = 0;
  int bit_depth = 0;
  std::vector<png_byte> pixels;
};

bool read_png(std::FILE* f, DecodedPng& out, bool expand_to_rgb) {
  PngReader r;
  if (!r.png || !r.info) return false;
  if (setjmp(png_jmpbuf(r.png))) return false;
  png_init_io(r.png, f);
  png_read_info(r.png, r.info);
  out.width = png_get_image_width(r.png, r.info);
  out.height = png_get_image_height(r.png, r.info);
  out.color_type = png_get_color_type(r.png, r.info);
  out.bit_depth = png_get_bit_depth(r.png, r.info);
  if (out.bit_depth == 16) png_set_strip_16(r.png);
  if (out.bit_depth < 8) png_set_packing(r.png);
  if (expand_to_rgb) {
    if (out.color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (out.color_type == PNG_COLOR_TYPE_GRAY || out.color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(r.png);
    if (out.color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(r.png);
  }
  png_read_update_info(r.png, r.info);
  const auto stride = png_get_rowbytes(r.png, r.info);
  out.pixels.resize(stride * out.height);
  std::vector<png_bytep> rows(out.height);
  for (png_uint_32 y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + y * stride;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return true;
}

}  // namespace

void write_label_png(const std::filesystem::path& path, const LabelMap& labels, const std::vector<Rgb>& palette) {
  if (palette.empty() || palette.size() > 256) throw IoError(path, "palette must hold 1..256 colors");
  std::vector<png_byte> pixels(static_cast<std::size_t>(labels.size()));
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const auto v = labels.data()[i];
    if (v < 0 || static_cast<std::size_t>(v) >= palette.size()) {
      throw IoError(path, "class id " + std::to_string(v) + " outside palette of " + std::to_string(palette.size()));
    }
    pixels[static_cast<std::size_t>(i)] = static_cast<png_byte>(v);
  }
  const auto h = static_cast<std::size_t>(labels.rows());
  const auto w = static_cast<std::size_t>(labels.cols());
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = pixels.data() + y * w;
  auto f = open_file(path, "wb");
  if (!write_png(f.get(), h, w, PNG_COLOR_TYPE_PALETTE, &palette, rows)) throw IoError(path, "PNG encoding failed");
}

LabelMap read_label_png(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  DecodedPng png;
  if (!read_png(f.get(), png, false)) throw IoError(path, "corrupt PNG");
  if (png.color_type != PNG_COLOR_TYPE_PALETTE && png.color_type != PNG_COLOR_TYPE_GRAY) {
    throw IoError(path, "label PNG must be paletted or 8-bit gray");
  }
  LabelMap labels(png.height, png.width);
  for (std::size_t i = 0; i < png.pixels.size(); ++i) labels.data()[i] = png.pixels[i];
  return labels;
}

void write_rgb_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
                   const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != height * width * 3) throw IoError(path, "RGB buffer size does not match image size");
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(rgb.data() + y * width * 3);
  auto f = open_file(path, "wb");
  if (!write_png(f.get(), height, width, PNG_COLOR_TYPE_RGB, nullptr, rows)) throw IoError(path, "PNG encoding failed");
}

std::vector<std::uint8_t> read_rgb_png(const std::filesystem::path& path, std::size_t& height, std::size_t& width) {
  auto f = open_file(path, "rb");
  DecodedPng png;
  if (!read_png(f.get(), png, true)) throw IoError(path, "corrupt PNG");
  height = png.height;
  width = png.width;
  return {png.pixels.begin(), png.pixels.end()};
}

}  // namespace anglseg
