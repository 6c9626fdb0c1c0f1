#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "gnm/core/error.hpp"
#include "gnm/core/tensor.hpp"

namespace gnm {

// 8-bit image, row-major, interleaved channels (RGB or grayscale).
struct ImageU8 {
  int w = 0, h = 0, c = 0;
  std::vector<uint8_t> pix;

  ImageU8() = default;
  ImageU8(int w_, int h_, int c_) : w(w_), h(h_), c(c_), pix(static_cast<size_t>(w_) * h_ * c_, 0) {}

  uint8_t& at(int x, int y, int ch) {
    return pix[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  uint8_t at(int x, int y, int ch) const {
    return pix[(static_cast<size_t>(y) * w + x) * c + ch];
  }
};

inline void write_png(const std::string& path, const ImageU8& img) {
  if (img.c != 1 && img.c != 3) throw IoError("write_png supports 1 or 3 channels");
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot open for write: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng write failure: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               img.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // fixed encode settings keep outputs byte-identical across runs
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.h));
  for (int y = 0; y < img.h; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.pix.data() + static_cast<size_t>(y) * img.w * img.c);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline ImageU8 read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open for read: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("libpng read failure: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  int ch = static_cast<int>(png_get_channels(png, info));
  ImageU8 img(static_cast<int>(w), static_cast<int>(h), ch);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.pix.data() + static_cast<size_t>(y) * w * ch;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

// [3,H,W] or [1,H,W] float in [0,1] -> interleaved bytes.
template <class T>
ImageU8 tensor_to_image(const Tensor<T>& t) {
  if (t.ndim() != 3) throw ShapeError("tensor_to_image expects CHW");
  int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  ImageU8 img(w, h, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) {
        double v = static_cast<double>(t.at({k, y, x}));
        v = std::min(1.0, std::max(0.0, v));
        img.at(x, y, k) = static_cast<uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

template <class T>
Tensor<T> image_to_tensor(const ImageU8& img) {
  Tensor<T> t({img.c, img.h, img.w});
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int k = 0; k < img.c; ++k)
        t.at({k, y, x}) = static_cast<T>(img.at(x, y, k)) / T(255);
  return t;
}

// Bilinear resize of a single-channel float bitmap.
template <class T>
std::vector<T> resize_bilinear(const std::vector<T>& src, int sw, int sh, int dw, int dh) {
  std::vector<T> dst(static_cast<size_t>(dw) * dh);
  for (int y = 0; y < dh; ++y) {
    double sy = (y + 0.5) * sh / dh - 0.5;
    int y0 = static_cast<int>(std::floor(sy));
    double fy = sy - y0;
    int y0c = std::clamp(y0, 0, sh - 1), y1c = std::clamp(y0 + 1, 0, sh - 1);
    for (int x = 0; x < dw; ++x) {
      double sx = (x + 0.5) * sw / dw - 0.5;
      int x0 = static_cast<int>(std::floor(sx));
      double fx = sx - x0;
      int x0c = std::clamp(x0, 0, sw - 1), x1c = std::clamp(x0 + 1, 0, sw - 1);
      double v = (1 - fy) * ((1 - fx) * src[static_cast<size_t>(y0c) * sw + x0c] +
                             fx * src[static_cast<size_t>(y0c) * sw + x1c]) +
                 fy * ((1 - fx) * src[static_cast<size_t>(y1c) * sw + x0c] +
                       fx * src[static_cast<size_t>(y1c) * sw + x1c]);
      dst[static_cast<size_t>(y) * dw + x] = static_cast<T>(v);
    }
  }
  return dst;
}

inline void draw_rect(ImageU8& img, int x0, int y0, int x1, int y1, uint8_t r, uint8_t g,
                      uint8_t b) {
  x0 = std::clamp(x0, 0, img.w - 1);
  x1 = std::clamp(x1, 0, img.w - 1);
  y0 = std::clamp(y0, 0, img.h - 1);
  y1 = std::clamp(y1, 0, img.h - 1);
  auto put = [&](int x, int y) {
    if (img.c == 3) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    } else {
      img.at(x, y, 0) = r;
    }
  };
  for (int x = x0; x <= x1; ++x) {
    put(x, y0);
    put(x, y1);
  }
  for (int y = y0; y <= y1; ++y) {
    put(x0, y);
    put(x1, y);
  }
}

// Tile equally sized images into a rows x cols grid (2 px separation).
inline ImageU8 montage(const std::vector<ImageU8>& tiles, int cols) {
  if (tiles.empty()) return ImageU8(1, 1, 3);
  int rows = (static_cast<int>(tiles.size()) + cols - 1) / cols;
  int tw = tiles[0].w, th = tiles[0].h;
  int sep = 2;
  ImageU8 out(cols * tw + (cols - 1) * sep, rows * th + (rows - 1) * sep, 3);
  for (size_t i = 0; i < tiles.size(); ++i) {
    const ImageU8& t = tiles[i];
    int gx = (static_cast<int>(i) % cols) * (tw + sep);
    int gy = (static_cast<int>(i) / cols) * (th + sep);
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x)
        for (int k = 0; k < 3; ++k)
          out.at(gx + x, gy + y, k) = t.c == 3 ? t.at(x, y, k) : t.at(x, y, 0);
  }
  return out;
}

}  // namespace gnm
