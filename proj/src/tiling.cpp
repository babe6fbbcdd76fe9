#include "patchmil/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchmil/error.hpp"

namespace patchmil {

std::size_t PatchGrid::index_of(GridCell cell) const {
  if (cell.row < 0 || cell.row >= rows() || cell.col < 0 || cell.col >= cols())
    throw InvalidArgument("grid cell out of range: (" + std::to_string(cell.row) + "," +
                          std::to_string(cell.col) + ")");
  return static_cast<std::size_t>(cell.row) * offsets_x.size() + static_cast<std::size_t>(cell.col);
}

GridCell PatchGrid::cell_of(std::size_t index) const {
  if (index >= patch_count()) throw InvalidArgument("patch index out of range: " + std::to_string(index));
  return {static_cast<int>(index / offsets_x.size()), static_cast<int>(index % offsets_x.size())};
}

PixelRect PatchGrid::rect(std::size_t index) const {
  const GridCell c = cell_of(index);
  const int y = offsets_y[c.row];
  const int x = offsets_x[c.col];
  return {y, x, y + patch_size, x + patch_size};
}

std::vector<int> grid_positions(int extent, int patch_size, int stride, bool edge_snap) {
  if (patch_size <= 0 || stride <= 0)
    throw InvalidArgument("patch size and stride must be positive");
  if (patch_size > extent)
    throw InvalidArgument("patch size " + std::to_string(patch_size) + " exceeds image extent " +
                          std::to_string(extent));
  std::vector<int> offsets;
  for (int o = 0; o + patch_size <= extent; o += stride) offsets.push_back(o);
  if (edge_snap && offsets.back() != extent - patch_size) offsets.push_back(extent - patch_size);
  return offsets;
}

PatchGrid make_grid(int image_height, int image_width, int patch_size, int stride, bool edge_snap) {
  PatchGrid g;
  g.image_height = image_height;
  g.image_width = image_width;
  g.patch_size = patch_size;
  g.stride = stride;
  g.edge_snap = edge_snap;
  g.offsets_y = grid_positions(image_height, patch_size, stride, edge_snap);
  g.offsets_x = grid_positions(image_width, patch_size, stride, edge_snap);
  return g;
}

Letterbox letterbox_geometry(int height, int width, int target) {
  if (height <= 0 || width <= 0) throw InvalidArgument("degenerate image extent");
  if (target <= 0) throw InvalidArgument("standardization target must be positive");
  const double scale = static_cast<double>(target) / std::max(height, width);
  Letterbox lb;
  lb.scaled_height = std::clamp(static_cast<int>(std::lround(height * scale)), 1, target);
  lb.scaled_width = std::clamp(static_cast<int>(std::lround(width * scale)), 1, target);
  lb.pad_top = (target - lb.scaled_height) / 2;
  lb.pad_left = (target - lb.scaled_width) / 2;
  return lb;
}

namespace {

struct Tap {
  int src;
  double weight;
};

// Per-output-sample source taps for resampling `in` samples to `out`.
std::vector<std::vector<Tap>> resample_taps(int in, int out) {
  std::vector<std::vector<Tap>> taps(out);
  const double scale = static_cast<double>(in) / out;
  if (in == out) {
    for (int i = 0; i < out; ++i) taps[i] = {{i, 1.0}};
  } else if (scale > 1.0) {
    // Area averaging over the footprint [i*scale, (i+1)*scale).
    for (int i = 0; i < out; ++i) {
      const double lo = i * scale;
      const double hi = (i + 1) * scale;
      for (int s = static_cast<int>(std::floor(lo)); s < static_cast<int>(std::ceil(hi)) && s < in; ++s) {
        const double w = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
        if (w > 0.0) taps[i].push_back({s, w / scale});
      }
    }
  } else {
    for (int i = 0; i < out; ++i) {
      const double c = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int s0 = static_cast<int>(std::floor(c));
      const double f = c - s0;
      if (s0 + 1 < in && f > 0.0)
        taps[i] = {{s0, 1.0 - f}, {s0 + 1, f}};
      else
        taps[i] = {{s0, 1.0}};
    }
  }
  return taps;
}

}  // namespace

Image standardize_image(const Image& raw, int target, int channels) {
  if (raw.empty() || static_cast<std::size_t>(raw.height) * raw.width * raw.channels != raw.data.size())
    throw InvalidArgument("cannot standardize a degenerate (0-extent) image");
  if (target <= 0) throw InvalidArgument("standardization target must be positive");
  if (channels <= 0) throw InvalidArgument("channel count must be positive");

  const auto plane = raw.data.begin();
  const auto [mn, mx] = std::minmax_element(plane, plane + static_cast<std::ptrdiff_t>(raw.plane_size()));
  const float lo = *mn;
  const float range = *mx - *mn;

  const Letterbox lb = letterbox_geometry(raw.height, raw.width, target);
  const auto ytaps = resample_taps(raw.height, lb.scaled_height);
  const auto xtaps = resample_taps(raw.width, lb.scaled_width);

  // Horizontal pass on normalized values, then vertical.
  std::vector<double> rows(static_cast<std::size_t>(raw.height) * lb.scaled_width);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < lb.scaled_width; ++x) {
      double acc = 0.0;
      for (const Tap& t : xtaps[x]) {
        const float v = range > 0.0f ? (raw.at(y, t.src) - lo) / range : 0.0f;
        acc += t.weight * v;
      }
      rows[static_cast<std::size_t>(y) * lb.scaled_width + x] = acc;
    }
  }
  Image out(target, target, channels, 0.0f);
  for (int y = 0; y < lb.scaled_height; ++y) {
    for (int x = 0; x < lb.scaled_width; ++x) {
      double acc = 0.0;
      for (const Tap& t : ytaps[y]) acc += t.weight * rows[static_cast<std::size_t>(t.src) * lb.scaled_width + x];
      out.at(y + lb.pad_top, x + lb.pad_left, 0) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  for (int c = 1; c < channels; ++c)
    std::copy_n(out.data.begin(), out.plane_size(), out.data.begin() + static_cast<std::ptrdiff_t>(c * out.plane_size()));
  return out;
}

std::vector<Patch> tile_image(const Image& image, const PatchGrid& grid, std::int64_t source_id) {
  if (image.height != grid.image_height || image.width != grid.image_width)
    throw InvalidArgument("image extent " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                          " does not match grid extent " + std::to_string(grid.image_height) + "x" +
                          std::to_string(grid.image_width));
  const int p = grid.patch_size;
  std::vector<Patch> patches;
  patches.reserve(grid.patch_count());
  for (std::size_t k = 0; k < grid.patch_count(); ++k) {
    const PixelRect r = grid.rect(k);
    Patch patch{Image(p, p, image.channels), k, source_id};
    for (int c = 0; c < image.channels; ++c)
      for (int y = 0; y < p; ++y) {
        const float* src = &image.data[(static_cast<std::size_t>(c) * image.height + r.y0 + y) * image.width + r.x0];
        std::copy_n(src, p, &patch.pixels.at(y, 0, c));
      }
    patches.push_back(std::move(patch));
  }
  return patches;
}

}  // namespace patchmil
