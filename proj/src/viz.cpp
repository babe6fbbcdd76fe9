#include "patchmil/viz.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "patchmil/error.hpp"

namespace patchmil {
namespace {

std::uint8_t lerp(std::uint8_t a, std::uint8_t b, double t) {
  return static_cast<std::uint8_t>(std::lround(a + (static_cast<double>(b) - a) * t));
}

nlohmann::json rgb_json(Rgb c) { return nlohmann::json::array({c.r, c.g, c.b}); }

void stroke_inside(RgbImage& out, const PixelRect& r, int thickness, Rgb color) {
  const int t = std::min({thickness, (r.y1 - r.y0 + 1) / 2, (r.x1 - r.x0 + 1) / 2});
  for (int y = std::max(0, r.y0); y < std::min(out.height, r.y1); ++y)
    for (int x = std::max(0, r.x0); x < std::min(out.width, r.x1); ++x)
      if (y < r.y0 + t || y >= r.y1 - t || x < r.x0 + t || x >= r.x1 - t) out.set(y, x, color);
}

}  // namespace

void OverlayStyle::validate() const {
  if (max_thickness_px < 1) throw InvalidArgument("overlay: max thickness must be >= 1");
  if (!(vanish_threshold >= 0.0 && vanish_threshold < 1.0)) throw InvalidArgument("overlay: vanish threshold must lie in [0,1)");
  if (!(mask_alpha >= 0.0 && mask_alpha <= 1.0)) throw InvalidArgument("overlay: mask alpha must lie in [0,1]");
}

nlohmann::json to_json(const OverlayStyle& s) {
  return {{"color_low", rgb_json(s.color_low)},           {"color_high", rgb_json(s.color_high)},
          {"max_thickness_px", s.max_thickness_px},       {"vanish_threshold", s.vanish_threshold},
          {"annotation_color", rgb_json(s.annotation_color)}, {"mask_alpha", s.mask_alpha}};
}

StrokeStyle score_to_style(double score, const OverlayStyle& style) {
  if (!(score >= 0.0 && score <= 1.0)) throw InvalidArgument("overlay: score outside [0,1]: " + std::to_string(score));
  StrokeStyle s;
  s.color = {lerp(style.color_low.r, style.color_high.r, score), lerp(style.color_low.g, style.color_high.g, score),
             lerp(style.color_low.b, style.color_high.b, score)};
  s.thickness = score < style.vanish_threshold ? 0 : static_cast<int>(std::lround(score * style.max_thickness_px));
  return s;
}

RgbImage render_overlay(const Image& image, const ScoreGrid& scores, const PatchGrid& grid, const OverlayStyle& style,
                        const std::optional<Annotation>& annotation) {
  style.validate();
  if (image.height != grid.image_height || image.width != grid.image_width)
    throw InvalidArgument("overlay: image extent does not match the patch grid");
  if (scores.rows != grid.rows() || scores.cols != grid.cols() || scores.scores.size() != grid.patch_count())
    throw InvalidArgument("overlay: score grid is not aligned with the patch grid");
  RgbImage out = to_rgb(image);

  if (annotation && annotation->is_mask()) {
    const Image& m = annotation->mask();
    if (m.height != image.height || m.width != image.width) throw InvalidArgument("overlay: mask extent mismatch");
    const double a = style.mask_alpha;
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        if (m.at(y, x) != 0.0f) {
          const Rgb c = out.get(y, x);
          out.set(y, x, {static_cast<std::uint8_t>(std::lround(c.r * (1 - a) + 255 * a)),
                         static_cast<std::uint8_t>(std::lround(c.g * (1 - a))),
                         static_cast<std::uint8_t>(std::lround(c.b * (1 - a)))});
        }
  }

  std::vector<std::size_t> order(scores.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores.scores[a] < scores.scores[b]; });
  for (std::size_t k : order) {
    const StrokeStyle s = score_to_style(scores.scores[k], style);
    if (s.thickness > 0) stroke_inside(out, grid.rect(k), s.thickness, s.color);
  }

  if (annotation && !annotation->is_mask()) {
    for (const Box& b : annotation->boxes()) {
      const PixelRect r{static_cast<int>(std::floor(b.y0)), static_cast<int>(std::floor(b.x0)),
                        static_cast<int>(std::ceil(b.y1)), static_cast<int>(std::ceil(b.x1))};
      stroke_inside(out, r, 2, style.annotation_color);
    }
  }
  return out;
}

nlohmann::json overlay_sidecar(const ScoreGrid& scores, const PatchGrid& grid, const OverlayStyle& style) {
  return {{"rows", scores.rows},
          {"cols", scores.cols},
          {"scores", scores.scores},
          {"image_score", scores.image_score},
          {"argmax", {scores.argmax.row, scores.argmax.col}},
          {"offsets_y", grid.offsets_y},
          {"offsets_x", grid.offsets_x},
          {"patch_size", grid.patch_size},
          {"style", to_json(style)}};
}

}  // namespace patchmil
