// 8-bit single-channel PNG read/write via libpng. The dataset format is
// strict: grayscale, 8-bit, no alpha; anything else is rejected.
#pragma once

#include <csetjmp>
#include <cstdio>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

namespace partsnet {

struct GrayImage {
  int w = 0;
  int h = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * w + x]; }
};

namespace detail_png {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void quiet_warn(png_structp, png_const_charp) {}

}  // namespace detail_png

inline void write_png_gray8(const std::string& path, const GrayImage& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.w) * img.h) {
    throw std::invalid_argument("write_png_gray8: pixel buffer does not match " +
                                std::to_string(img.w) + "x" + std::to_string(img.h));
  }
  detail_png::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_png_gray8: cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                            detail_png::quiet_warn);
  if (!png) throw std::runtime_error("write_png_gray8: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("write_png_gray8: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png_gray8: encoding failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.h; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.w));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline GrayImage read_png_gray8(const std::string& path) {
  detail_png::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_png_gray8: missing file: " + path);

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error("read_png_gray8: corrupt image (bad PNG signature): " + path);
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                           detail_png::quiet_warn);
  if (!png) throw std::runtime_error("read_png_gray8: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("read_png_gray8: png_create_info_struct failed");
  }

  GrayImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png_gray8: corrupt image: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  if (color != PNG_COLOR_TYPE_GRAY || depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png_gray8: unsupported format (need 8-bit grayscale): " + path);
  }
  img.w = width;
  img.h = height;
  img.pixels.resize(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, img.pixels.data() + static_cast<std::size_t>(y) * width, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace partsnet
