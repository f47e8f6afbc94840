#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "icsc/nn/tensor.hpp"

namespace icsc {

/// 8-bit interleaved RGB, row-major from the top-left pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* pixel(int u, int v) { return &rgb[(static_cast<std::size_t>(v) * width + u) * 3]; }
  const std::uint8_t* pixel(int u, int v) const {
    return &rgb[(static_cast<std::size_t>(v) * width + u) * 3];
  }
  bool operator==(const Image&) const = default;
};

/// Lossless PNG. Throws IoError naming the path on failure.
void write_png(const Image& img, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// Bilinear resize (pixel-centre aligned, no crop).
Image resize_bilinear(const Image& img, int width, int height);

/// Resizes to width x height and maps bytes to [-1, 1] as x / 127.5 - 1.
/// Result is [3, height, width].
nn::Tensor to_network_input(const Image& img, int width, int height);

}  // namespace icsc
