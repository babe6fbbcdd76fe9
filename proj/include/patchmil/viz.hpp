#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "patchmil/annotation.hpp"
#include "patchmil/image.hpp"
#include "patchmil/mil_head.hpp"
#include "patchmil/tiling.hpp"

namespace patchmil {

struct OverlayStyle {
  Rgb color_low{255, 255, 255};
  Rgb color_high{139, 0, 0};
  int max_thickness_px = 6;
  double vanish_threshold = 0.02;
  Rgb annotation_color{0, 255, 0};
  double mask_alpha = 0.35;

  void validate() const;
};

nlohmann::json to_json(const OverlayStyle& s);

struct StrokeStyle {
  Rgb color;
  int thickness = 0;  // 0 means the patch is not drawn
};

/// Color interpolated low->high by score; thickness round(score * max),
/// forced to 0 below the vanish threshold.
StrokeStyle score_to_style(double score, const OverlayStyle& style);

/// Gray image + patch borders (stroked inside each patch, lowest score
/// first so higher scores end on top) + optional ground truth: masks are
/// alpha-blended in red underneath the borders, boxes are outlined in
/// annotation_color on top.
RgbImage render_overlay(const Image& image, const ScoreGrid& scores, const PatchGrid& grid, const OverlayStyle& style,
                        const std::optional<Annotation>& annotation = std::nullopt);

/// JSON dump of the score grid, geometry and style next to a rendered PNG.
nlohmann::json overlay_sidecar(const ScoreGrid& scores, const PatchGrid& grid, const OverlayStyle& style);

}  // namespace patchmil
