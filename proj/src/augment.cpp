#include "patchmil/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "patchmil/error.hpp"

namespace patchmil {

bool Annotation::empty() const {
  if (is_mask()) {
    const Image& m = mask();
    return std::none_of(m.data.begin(), m.data.end(), [](float v) { return v != 0.0f; });
  }
  return std::none_of(boxes().begin(), boxes().end(), [](const Box& b) { return b.area() > 0.0; });
}

void AugmentConfig::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!(flip_horizontal_prob >= 0.0 && flip_horizontal_prob <= 1.0))
    throw InvalidArgument("augment: flip probability must lie in [0,1]");
  if (!finite(scale_lo) || !finite(scale_hi) || !(scale_lo > 0.0) || scale_lo > scale_hi)
    throw InvalidArgument("augment: scale range must satisfy 0 < lo <= hi");
  if (!finite(translate_fraction) || translate_fraction < 0.0) throw InvalidArgument("augment: bad translate range");
  if (!finite(rotate_degrees) || rotate_degrees < 0.0) throw InvalidArgument("augment: bad rotate range");
}

Affine Affine::after(const Affine& o) const {
  return {a * o.a + b * o.d, a * o.b + b * o.e, a * o.c + b * o.f + c,
          d * o.a + e * o.d, d * o.b + e * o.e, d * o.c + e * o.f + f};
}

Affine Affine::inverse() const {
  const double det = a * e - b * d;
  if (std::abs(det) < 1e-12) throw InvalidArgument("singular affine transform");
  const double ia = e / det, ib = -b / det, id = -d / det, ie = a / det;
  return {ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)};
}

Affine TransformRecord::matrix() const {
  const double cx = width / 2.0;
  const double cy = height / 2.0;
  auto about_center = [&](Affine m) {
    const Affine to_origin{1, 0, -cx, 0, 1, -cy};
    const Affine back{1, 0, cx, 0, 1, cy};
    return back.after(m.after(to_origin));
  };
  Affine total;
  for (const TransformStep& s : steps) {
    Affine m;
    switch (s.kind) {
      case TransformKind::flip:
        if (s.p0 != 0.0) m = {-1, 0, static_cast<double>(width), 0, 1, 0};
        break;
      case TransformKind::scale:
        m = about_center({s.p0, 0, 0, 0, s.p0, 0});
        break;
      case TransformKind::translate:
        m = {1, 0, s.p0, 0, 1, s.p1};
        break;
      case TransformKind::rotate: {
        const double t = s.p0 * std::numbers::pi / 180.0;
        m = about_center({std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t), 0});
        break;
      }
    }
    total = m.after(total);
  }
  return total;
}

TransformRecord draw_transform(int height, int width, const AugmentConfig& config, Rng& rng) {
  config.validate();
  TransformRecord rec{height, width, {}};
  if (!config.enabled) return rec;
  std::array<TransformKind, 4> order{TransformKind::flip, TransformKind::scale, TransformKind::translate,
                                     TransformKind::rotate};
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
  for (TransformKind k : order) {
    TransformStep s{k, 0.0, 0.0};
    switch (k) {
      case TransformKind::flip:
        s.p0 = uniform(rng) < config.flip_horizontal_prob ? 1.0 : 0.0;
        break;
      case TransformKind::scale:
        s.p0 = uniform(rng, config.scale_lo, config.scale_hi);
        break;
      case TransformKind::translate:
        s.p0 = uniform(rng, -config.translate_fraction, config.translate_fraction) * width;
        s.p1 = uniform(rng, -config.translate_fraction, config.translate_fraction) * height;
        break;
      case TransformKind::rotate:
        s.p0 = uniform(rng, -config.rotate_degrees, config.rotate_degrees);
        break;
    }
    rec.steps.push_back(s);
  }
  return rec;
}

namespace {

void check_extent(const TransformRecord& record, int height, int width, const char* what) {
  if (record.height != height || record.width != width)
    throw InvalidArgument(std::string(what) + " extent " + std::to_string(height) + "x" + std::to_string(width) +
                          " does not match transform record extent " + std::to_string(record.height) + "x" +
                          std::to_string(record.width));
}

}  // namespace

Image apply_transform(const Image& image, const TransformRecord& record) {
  check_extent(record, image.height, image.width, "image");
  if (record.identity()) return image;
  const Affine inv = record.matrix().inverse();
  Image out(image.height, image.width, image.channels, 0.0f);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const auto [sx, sy] = inv.apply(x + 0.5, y + 0.5);
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = sample_bilinear(image, sy, sx, c, 0.0f);
    }
  return out;
}

Augmented random_augment(const Image& image, const AugmentConfig& config, Rng& rng) {
  TransformRecord rec = draw_transform(image.height, image.width, config, rng);
  return {apply_transform(image, rec), std::move(rec)};
}

Annotation transform_annotation(const Annotation& annotation, const TransformRecord& record) {
  check_extent(record, annotation.height, annotation.width, "annotation");
  if (record.identity()) return annotation;
  const Affine fwd = record.matrix();
  Annotation out{annotation.height, annotation.width, {}};
  if (annotation.is_mask()) {
    const Image& m = annotation.mask();
    const Affine inv = fwd.inverse();
    Image warped(m.height, m.width, 1, 0.0f);
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        const auto [sx, sy] = inv.apply(x + 0.5, y + 0.5);
        const int ix = static_cast<int>(std::floor(sx));
        const int iy = static_cast<int>(std::floor(sy));
        if (ix >= 0 && iy >= 0 && ix < m.width && iy < m.height) warped.at(y, x) = m.at(iy, ix);
      }
    out.geometry = std::move(warped);
  } else {
    std::vector<Box> boxes;
    for (const Box& b : annotation.boxes()) {
      const std::array<std::array<double, 2>, 4> corners{fwd.apply(b.x0, b.y0), fwd.apply(b.x1, b.y0),
                                                         fwd.apply(b.x0, b.y1), fwd.apply(b.x1, b.y1)};
      Box h{corners[0][0], corners[0][1], corners[0][0], corners[0][1]};
      for (const auto& [cx, cy] : corners) {
        h.x0 = std::min(h.x0, cx);
        h.x1 = std::max(h.x1, cx);
        h.y0 = std::min(h.y0, cy);
        h.y1 = std::max(h.y1, cy);
      }
      h.x0 = std::clamp(h.x0, 0.0, static_cast<double>(annotation.width));
      h.x1 = std::clamp(h.x1, 0.0, static_cast<double>(annotation.width));
      h.y0 = std::clamp(h.y0, 0.0, static_cast<double>(annotation.height));
      h.y1 = std::clamp(h.y1, 0.0, static_cast<double>(annotation.height));
      if (h.area() > 0.0) boxes.push_back(h);
    }
    out.geometry = std::move(boxes);
  }
  return out;
}

}  // namespace patchmil
