#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace tae {

/// 8-bit interleaved raster (row-major, channel-last). The pipeline works on
/// three-channel images; single-channel files are expanded on load.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c = 3, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const noexcept { return width <= 0 || height <= 0; }

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Float planar-free copy with values in [0, 255].
std::vector<float> to_float(const Image& img);
Image from_float(std::span<const float> values, int width, int height, int channels);

/// Rec. 601 luma in [0, 1], one value per pixel.
std::vector<float> luminance(const Image& img);

/// Top-left corner of the size×size window centered at (cx, cy).
inline int window_origin(double center, int size) {
  return static_cast<int>(std::lround(center)) - size / 2;
}

/// True when the size×size window centered at (cx, cy) lies inside a
/// width×height raster.
bool window_fits(double cx, double cy, int size, int width, int height);

/// Copies the size×size window centered at (cx, cy). Throws InvalidInput when
/// the window leaves the image.
Image crop_patch(const Image& img, double cx, double cy, int size);

Image read_image(const std::filesystem::path& path);
void write_image(const Image& img, const std::filesystem::path& path);

/// In-memory JPEG round trip at the given quality (1..100).
Image jpeg_roundtrip(const Image& img, int quality);

}  // namespace tae
