#include <doctest.h>

#include <fstream>

#include "patchmil/error.hpp"
#include "patchmil/image_io.hpp"
#include "patchmil/rng.hpp"
#include "patchmil/viz.hpp"
#include "support.hpp"

using namespace patchmil;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
  Image img(h, w, 1);
  Rng rng = substream(seed, "img");
  for (float& v : img.data) v = static_cast<float>(uniform(rng));
  return img;
}

ScoreGrid one_hot(const PatchGrid& g, std::size_t k, double score) {
  std::vector<double> s(g.patch_count(), 0.0);
  s[k] = score;
  return make_score_grid(s, g);
}

bool on_border(const PixelRect& r, int y, int x, int t) {
  return r.contains(y, x) && (y - r.y0 < t || r.y1 - 1 - y < t || x - r.x0 < t || r.x1 - 1 - x < t);
}

}  // namespace

TEST_CASE("score_to_style") {
  const OverlayStyle st;
  const StrokeStyle zero = score_to_style(0.0, st);
  CHECK(zero.color == Rgb{255, 255, 255});
  CHECK(zero.thickness == 0);
  const StrokeStyle one = score_to_style(1.0, st);
  CHECK(one.color == Rgb{139, 0, 0});
  CHECK(one.thickness == 6);
  const StrokeStyle half = score_to_style(0.5, st);
  CHECK(half.color == Rgb{197, 128, 128});
  CHECK(half.thickness == 3);
  CHECK(score_to_style(0.019, st).thickness == 0);
  CHECK_THROWS_AS(score_to_style(1.01, st), InvalidArgument);
  CHECK_THROWS_AS(score_to_style(-0.1, st), InvalidArgument);

  int last = 0;
  for (int i = 0; i <= 1000; ++i) {
    const int t = score_to_style(i / 1000.0, st).thickness;
    CHECK(t >= last);
    last = t;
  }
}

TEST_CASE("all-zero scores leave the image untouched") {
  const Image img = random_image(128, 128, 1);
  const PatchGrid g = make_grid(128, 128, 64, 32);
  const RgbImage out = render_overlay(img, make_score_grid(std::vector<double>(g.patch_count(), 0.0), g), g, {});
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      const auto v = static_cast<std::uint8_t>(std::lround(img.at(y, x) * 255.0f));
      REQUIRE(out.get(y, x) == Rgb{v, v, v});
    }
}

TEST_CASE("score 1 on a black image colors exactly the 6 px border") {
  const PatchGrid g = make_grid(256, 256, 64, 32);
  const Image black(256, 256, 1);
  for (std::size_t k : {std::size_t{0}, g.index_of({3, 4}), g.patch_count() - 1}) {
    const RgbImage out = render_overlay(black, one_hot(g, k, 1.0), g, {});
    const PixelRect r = g.rect(k);
    int colored = 0;
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 256; ++x) {
        const Rgb want = on_border(r, y, x, 6) ? Rgb{139, 0, 0} : Rgb{0, 0, 0};
        REQUIRE(out.get(y, x) == want);
        colored += out.get(y, x) == Rgb{139, 0, 0};
      }
    CHECK(colored == 64 * 64 - 52 * 52);
  }
}

TEST_CASE("higher scores are drawn on top") {
  const PatchGrid g = make_grid(128, 128, 64, 32);
  const Image black(128, 128, 1);
  std::vector<double> s(g.patch_count(), 0.0);
  const std::size_t a = g.index_of({0, 0}), b = g.index_of({0, 1});
  s[a] = 0.9;
  s[b] = 0.4;
  const RgbImage out = render_overlay(black, make_score_grid(s, g), g, {});
  // Column 33 lies in both patches' left/right borders at row 2.
  CHECK(out.get(2, 33) == score_to_style(0.9, {}).color);
  s[a] = 0.3;
  s[b] = 0.8;
  const RgbImage swapped = render_overlay(black, make_score_grid(s, g), g, {});
  CHECK(swapped.get(2, 33) == score_to_style(0.8, {}).color);
}

TEST_CASE("pixels away from borders and annotations are preserved") {
  const Image img = random_image(192, 192, 2);
  const PatchGrid g = make_grid(192, 192, 64, 32);
  Rng rng = substream(3, "scores");
  std::vector<double> s(g.patch_count());
  for (double& v : s) v = uniform(rng);
  const ScoreGrid sg = make_score_grid(s, g);
  const RgbImage base = to_rgb(img);
  const RgbImage out = render_overlay(img, sg, g, {});
  for (int y = 0; y < 192; ++y)
    for (int x = 0; x < 192; ++x) {
      bool stroked = false;
      for (std::size_t k = 0; k < g.patch_count(); ++k)
        stroked = stroked || on_border(g.rect(k), y, x, score_to_style(s[k], {}).thickness);
      if (!stroked) REQUIRE(out.get(y, x) == base.get(y, x));
    }
}

TEST_CASE("annotations are drawn") {
  const PatchGrid g = make_grid(128, 128, 64, 32);
  const Image gray(128, 128, 1, 0.5f);
  const ScoreGrid zero = make_score_grid(std::vector<double>(g.patch_count(), 0.0), g);
  const RgbImage boxed = render_overlay(gray, zero, g, {}, Annotation{128, 128, std::vector<Box>{{10, 10, 30, 30}}});
  CHECK(boxed.get(10, 20) == Rgb{0, 255, 0});
  CHECK(boxed.get(20, 20) == Rgb{128, 128, 128});
  Image mask(128, 128, 1);
  mask.at(50, 50) = 1.0f;
  const RgbImage masked = render_overlay(gray, zero, g, {}, Annotation{128, 128, mask});
  CHECK(masked.get(50, 50).r > masked.get(50, 50).g);
  CHECK(masked.get(51, 51) == Rgb{128, 128, 128});
}

TEST_CASE("rendering is deterministic down to the file bytes") {
  const auto dir = testing::scratch_dir("viz");
  const Image img = random_image(128, 128, 5);
  const PatchGrid g = make_grid(128, 128, 64, 32);
  std::vector<double> s(g.patch_count());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = static_cast<double>(k) / static_cast<double>(s.size());
  const ScoreGrid sg = make_score_grid(s, g);
  io::write_rgb_png(dir / "a.png", render_overlay(img, sg, g, {}));
  io::write_rgb_png(dir / "b.png", render_overlay(img, sg, g, {}));
  std::ifstream fa(dir / "a.png", std::ios::binary), fb(dir / "b.png", std::ios::binary);
  const std::string a((std::istreambuf_iterator<char>(fa)), {}), b((std::istreambuf_iterator<char>(fb)), {});
  CHECK(!a.empty());
  CHECK(a == b);

  const auto side = overlay_sidecar(sg, g, {});
  CHECK(side.at("scores").size() == g.patch_count());
  CHECK(side.at("style").at("max_thickness_px") == 6);
}

TEST_CASE("misaligned input is rejected") {
  const PatchGrid g = make_grid(128, 128, 64, 32);
  const PatchGrid other = make_grid(192, 192, 64, 32);
  const ScoreGrid sg = make_score_grid(std::vector<double>(other.patch_count(), 0.0), other);
  CHECK_THROWS_AS(render_overlay(Image(128, 128, 1), sg, g, {}), InvalidArgument);
  CHECK_THROWS_AS(render_overlay(Image(100, 128, 1), make_score_grid(std::vector<double>(g.patch_count(), 0.0), g), g, {}),
                  InvalidArgument);
}
