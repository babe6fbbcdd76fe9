#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace patchmil {

/// Planar float image, channel-major: data[(c * height + y) * width + x].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c = 1, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  bool empty() const { return height <= 0 || width <= 0 || data.empty(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }

  float& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Interleaved 8-bit RGB raster, the output format of the overlay renderer.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // (y * width + x) * 3 + channel

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0) {}

  Rgb get(int y, int x) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    return {data[i], data[i + 1], data[i + 2]};
  }
  void set(int y, int x, Rgb c) {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    data[i] = c.r;
    data[i + 1] = c.g;
    data[i + 2] = c.b;
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Converts channel 0 of a [0,1] image to gray RGB (values clamped, rounded).
RgbImage to_rgb(const Image& image);

/// Bilinear sample at continuous coordinates where pixel (y, x) has its
/// center at (y + 0.5, x + 0.5). Samples outside the frame read as `fill`.
float sample_bilinear(const Image& image, double y, double x, int channel, float fill = 0.0f);

}  // namespace patchmil
