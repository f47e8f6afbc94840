#include "icsc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "icsc/error.hpp"

namespace icsc {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what != nullptr) *what = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

void write_png(const Image& img, const std::filesystem::path& path) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw UsageError("write_png: malformed image");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open for writing: " + path.string());

  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int v = 0; v < img.height; ++v) {
    rows[static_cast<std::size_t>(v)] = const_cast<png_bytep>(img.pixel(0, v));
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path.string() + ": " + err);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw IoError("failed writing PNG " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open image: " + path.string());

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed reading PNG " + path.string() + ": " + err);
  }
  png_init_io(png, file.get());
  png_read_png(png, info,
               PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_PACKING |
                   PNG_TRANSFORM_EXPAND,
               nullptr);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);
  img = Image(w, h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const png_bytep src = rows[v] + static_cast<std::size_t>(u) * channels;
      std::uint8_t* dst = img.pixel(u, v);
      for (int c = 0; c < 3; ++c) dst[c] = channels >= 3 ? src[c] : src[0];
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

namespace {

template <typename Sink>
void bilinear(const Image& img, int width, int height, Sink&& sink) {
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int v = 0; v < height; ++v) {
    const double fy = std::clamp((v + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int u = 0; u < width; ++u) {
      const double fx = std::clamp((u + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.pixel(x0, y0)[c] * (1 - wx) + img.pixel(x1, y0)[c] * wx;
        const double bot = img.pixel(x0, y1)[c] * (1 - wx) + img.pixel(x1, y1)[c] * wx;
        sink(u, v, c, top * (1 - wy) + bot * wy);
      }
    }
  }
}

}  // namespace

Image resize_bilinear(const Image& img, int width, int height) {
  if (width <= 0 || height <= 0 || img.width <= 0 || img.height <= 0) {
    throw UsageError("resize_bilinear: dimensions must be positive");
  }
  if (width == img.width && height == img.height) return img;
  Image out(width, height);
  bilinear(img, width, height, [&](int u, int v, int c, double x) {
    out.pixel(u, v)[c] = static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 255.0)));
  });
  return out;
}

nn::Tensor to_network_input(const Image& img, int width, int height) {
  if (width <= 0 || height <= 0 || img.width <= 0 || img.height <= 0) {
    throw UsageError("to_network_input: dimensions must be positive");
  }
  const auto w = static_cast<std::size_t>(width);
  const auto h = static_cast<std::size_t>(height);
  nn::Tensor t({3, h, w});
  bilinear(img, width, height, [&](int u, int v, int c, double x) {
    t[(static_cast<std::size_t>(c) * h + static_cast<std::size_t>(v)) * w + static_cast<std::size_t>(u)] =
        x / 127.5 - 1.0;
  });
  return t;
}

}  // namespace icsc
