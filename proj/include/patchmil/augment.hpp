#pragma once

#include <array>
#include <vector>

#include "patchmil/annotation.hpp"
#include "patchmil/image.hpp"
#include "patchmil/rng.hpp"

namespace patchmil {

struct AugmentConfig {
  bool enabled = true;
  double flip_horizontal_prob = 0.5;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double translate_fraction = 0.05;  // +/- fraction of the extent, per axis
  double rotate_degrees = 10.0;      // +/- degrees

  /// Throws InvalidArgument on an inconsistent configuration.
  void validate() const;
};

/// Forward map (x, y) -> (a x + b y + c, d x + e y + f) in continuous pixel
/// coordinates.
struct Affine {
  double a = 1, b = 0, c = 0;
  double d = 0, e = 1, f = 0;

  std::array<double, 2> apply(double x, double y) const { return {a * x + b * y + c, d * x + e * y + f}; }
  /// this after other: (this * other)(p) = this(other(p)).
  Affine after(const Affine& other) const;
  Affine inverse() const;
};

enum class TransformKind { flip, scale, translate, rotate };

struct TransformStep {
  TransformKind kind = TransformKind::flip;
  double p0 = 0.0;  // flip: 1 if applied; scale: factor; translate: dx px; rotate: degrees
  double p1 = 0.0;  // translate: dy px
};

/// Everything needed to replay an augmentation on the same-sized image or
/// its annotation. An empty step list is the identity.
struct TransformRecord {
  int height = 0;
  int width = 0;
  std::vector<TransformStep> steps;

  bool identity() const { return steps.empty(); }
  Affine matrix() const;
};

struct Augmented {
  Image image;
  TransformRecord record;
};

/// Draws a random order of flip/scale/translate/rotate and their magnitudes
/// from `rng`, then warps the image (bilinear, zero outside the frame). A
/// disabled config returns the input unchanged with an empty record.
Augmented random_augment(const Image& image, const AugmentConfig& config, Rng& rng);

TransformRecord draw_transform(int height, int width, const AugmentConfig& config, Rng& rng);

/// Bilinear warp of every channel.
Image apply_transform(const Image& image, const TransformRecord& record);

/// Nearest-neighbour warp for masks; boxes map to the clipped axis-aligned
/// hull of their transformed corners (boxes leaving the frame are dropped).
Annotation transform_annotation(const Annotation& annotation, const TransformRecord& record);

}  // namespace patchmil
