#pragma once

#include <variant>
#include <vector>

#include "patchmil/image.hpp"

namespace patchmil {

/// Axis-aligned box in continuous pixel coordinates of the standardized
/// image; pixel (y, x) spans [x, x+1) x [y, y+1).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double area() const { return (x1 > x0 && y1 > y0) ? (x1 - x0) * (y1 - y0) : 0.0; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Localization ground truth: a single-channel mask (nonzero = finding) or a
/// list of boxes, both tied to the image extent they annotate.
struct Annotation {
  int height = 0;
  int width = 0;
  std::variant<Image, std::vector<Box>> geometry;

  bool is_mask() const { return std::holds_alternative<Image>(geometry); }
  const Image& mask() const { return std::get<Image>(geometry); }
  const std::vector<Box>& boxes() const { return std::get<std::vector<Box>>(geometry); }
  /// True when no pixel/box area is marked.
  bool empty() const;
};

}  // namespace patchmil
