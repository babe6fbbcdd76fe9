#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "patchmil/image.hpp"

namespace patchmil {

/// Half-open pixel rectangle [y0, y1) x [x0, x1).
struct PixelRect {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  bool contains(int y, int x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
  bool intersects(const PixelRect& o) const { return y0 < o.y1 && o.y0 < y1 && x0 < o.x1 && o.x0 < x1; }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

struct GridCell {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

/// Tiling geometry for one standardized image. Patches are square and
/// enumerated row-major by (offset_y, offset_x).
struct PatchGrid {
  int image_height = 0;
  int image_width = 0;
  int patch_size = 0;
  int stride = 0;
  bool edge_snap = false;
  std::vector<int> offsets_y;
  std::vector<int> offsets_x;

  int rows() const { return static_cast<int>(offsets_y.size()); }
  int cols() const { return static_cast<int>(offsets_x.size()); }
  std::size_t patch_count() const { return offsets_y.size() * offsets_x.size(); }

  std::size_t index_of(GridCell cell) const;
  GridCell cell_of(std::size_t index) const;
  PixelRect rect(std::size_t index) const;

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

/// Offsets {0, s, 2s, ...} with offset + patch <= extent. With `edge_snap`,
/// extent - patch is appended when not already present so the far edge is
/// covered. Throws InvalidArgument when patch > extent or a size is <= 0.
std::vector<int> grid_positions(int extent, int patch_size, int stride, bool edge_snap);

PatchGrid make_grid(int image_height, int image_width, int patch_size, int stride, bool edge_snap = false);

/// Aspect-preserving fit of an h x w image into target x target.
struct Letterbox {
  int scaled_height = 0;
  int scaled_width = 0;
  int pad_top = 0;
  int pad_left = 0;
};

Letterbox letterbox_geometry(int height, int width, int target);

/// Min-max normalizes channel 0 to [0,1], resizes preserving aspect ratio
/// (area averaging when shrinking, bilinear when enlarging), zero-pads to
/// target x target centered, then replicates the plane to `channels`.
Image standardize_image(const Image& raw, int target, int channels = 1);

/// One patch cut from an image. `source_id` tags the image it came from so
/// downstream aggregation can check it never mixes images.
struct Patch {
  Image pixels;
  std::size_t index = 0;
  std::int64_t source_id = 0;
};

/// Copies every patch of `grid` out of `image` in row-major order.
std::vector<Patch> tile_image(const Image& image, const PatchGrid& grid, std::int64_t source_id = 0);

}  // namespace patchmil
