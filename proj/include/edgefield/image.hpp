#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "edgefield/common.hpp"

namespace edgefield {

/// Dense row-major floating point image with interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

/// Binary mask, one byte per pixel holding 0 or 1.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  std::uint8_t& at(int x, int y) { return data[index(x, y)]; }
  std::uint8_t at(int x, int y) const { return data[index(x, y)]; }
  std::size_t pixel_count() const { return data.size(); }
  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Binarizes a single-channel image: value > threshold -> 1.
Mask threshold(const Image& img, double threshold);

/// Bilinear sample of a mask treated as {0,1} values; (x, y) in pixel
/// coordinates where pixel (i, j) sits at integer position (i, j).
double sample_bilinear(const Mask& mask, double x, double y);

/// Mask PGM (P5, maxval 255, foreground = 255).
void write_pgm(const std::filesystem::path& path, const Mask& mask);
/// Single-channel [0,1] image to P5.
void write_pgm(const std::filesystem::path& path, const Image& gray);
/// Reads a P5 file; pixels >= 128 are foreground.
Mask read_pgm_mask(const std::filesystem::path& path);
/// Three-channel [0,1] image to P6.
void write_ppm(const std::filesystem::path& path, const Image& rgb);

}  // namespace edgefield
