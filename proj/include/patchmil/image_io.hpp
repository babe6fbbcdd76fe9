#pragma once

#include <filesystem>

#include "patchmil/image.hpp"

namespace patchmil::io {

/// Reads an 8- or 16-bit PNG (gray, gray+alpha, RGB or RGBA) or a binary PGM
/// (P5). Color inputs are reduced to luminance. Intensities are scaled to
/// [0,1] by the format's maximum value. Throws IoError on failure.
Image read_gray(const std::filesystem::path& path);

/// Writes channel 0 of a [0,1] image as an 8-bit grayscale PNG.
void write_gray_png(const std::filesystem::path& path, const Image& image);

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace patchmil::io
