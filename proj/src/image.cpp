#include "patchmil/image.hpp"

#include <algorithm>
#include <cmath>

namespace patchmil {

RgbImage to_rgb(const Image& image) {
  RgbImage out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const float v = std::clamp(image.at(y, x, 0), 0.0f, 1.0f);
      const auto g = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      out.set(y, x, {g, g, g});
    }
  }
  return out;
}

float sample_bilinear(const Image& image, double y, double x, int channel, float fill) {
  const double fy = y - 0.5;
  const double fx = x - 0.5;
  const int y0 = static_cast<int>(std::floor(fy));
  const int x0 = static_cast<int>(std::floor(fx));
  const double wy = fy - y0;
  const double wx = fx - x0;
  auto px = [&](int yy, int xx) -> double {
    if (yy < 0 || xx < 0 || yy >= image.height || xx >= image.width) return fill;
    return image.at(yy, xx, channel);
  };
  const double top = px(y0, x0) * (1.0 - wx) + px(y0, x0 + 1) * wx;
  const double bottom = px(y0 + 1, x0) * (1.0 - wx) + px(y0 + 1, x0 + 1) * wx;
  return static_cast<float>(top * (1.0 - wy) + bottom * wy);
}

}  // namespace patchmil
