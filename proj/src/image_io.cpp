#include "patchmil/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <cctype>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "patchmil/error.hpp"

namespace patchmil::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

[[noreturn]] void png_error_fn(png_structp, png_const_charp msg) { throw IoError(msg); }
void png_warning_fn(png_structp, png_const_charp) {}

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open image: " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  if (png == nullptr) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  try {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    if (depth == 16) png_set_swap(png);  // native little-endian 16-bit samples
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (width <= 0 || height <= 0) throw IoError("degenerate image: " + path.string());

    std::vector<png_byte> buffer(rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());

    Image img(height, width, 1);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (out_depth == 16) {
          std::uint16_t v;
          std::memcpy(&v, rows[y] + 2 * x, 2);
          img.at(y, x) = static_cast<float>(v) / 65535.0f;
        } else {
          img.at(y, x) = static_cast<float>(rows[y][x]) / 255.0f;
        }
      }
    }
    return img;
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  auto next_token = [&]() {
    std::string tok;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(ch);
    }
    return tok;
  };
  if (next_token() != "P5") throw IoError("unsupported PGM variant (want P5): " + path.string());
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw IoError("malformed PGM header: " + path.string());
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535)
    throw IoError("degenerate PGM header: " + path.string());
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * bytes);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw IoError("truncated PGM data: " + path.string());
  Image img(height, width, 1);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const unsigned v = bytes == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    img.data[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return img;
}

void write_png(const std::filesystem::path& path, const std::uint8_t* pixels, int height, int width,
               std::uint32_t format) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (png_image_write_to_file(&image, path.c_str(), 0, pixels, 0, nullptr) == 0) {
    std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

}  // namespace

Image read_gray(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());
  const std::string ext = lower_ext(path);
  if (ext == ".pgm") return read_pgm(path);
  return read_png(path);
}

void write_gray_png(const std::filesystem::path& path, const Image& image) {
  if (image.empty()) throw InvalidArgument("cannot write empty image: " + path.string());
  std::vector<std::uint8_t> px(image.plane_size());
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.data[i], 0.0f, 1.0f) * 255.0f));
  write_png(path, px.data(), image.height, image.width, PNG_FORMAT_GRAY);
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.height <= 0 || image.width <= 0) throw InvalidArgument("cannot write empty image: " + path.string());
  write_png(path, image.data.data(), image.height, image.width, PNG_FORMAT_RGB);
}

}  // namespace patchmil::io
