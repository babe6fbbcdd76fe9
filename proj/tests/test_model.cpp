#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "patchmil/error.hpp"
#include "patchmil/model.hpp"
#include "patchmil/optim.hpp"
#include "patchmil/rng.hpp"

using namespace patchmil;
namespace fs = std::filesystem;

namespace {

Patch random_patch(int size, int channels, std::uint64_t seed) {
  Patch p;
  p.pixels = Image(size, size, channels);
  Rng rng = substream(seed, "patch");
  for (float& v : p.pixels.data) v = static_cast<float>(uniform(rng));
  return p;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("patchmil_test_model_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ScorerSpec reference_spec(std::uint64_t seed, int frozen = 0) {
  ScorerSpec s;
  s.seed = seed;
  s.frozen_layer_count = frozen;
  return s;
}

}  // namespace

TEST_CASE("scores are in (0,1) and deterministic per patch") {
  const PatchScorer sc = build_scorer(reference_spec(1));
  const Patch p = random_patch(64, 1, 1);
  const std::vector<Patch> dup{p, p, random_patch(64, 1, 2)};
  const auto s = sc.score_patches(dup);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == s[1]);
  for (double v : s) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(sc.score(p.pixels) == s[0]);
}

TEST_CASE("zero head gives 0.5") {
  PatchScorer sc = build_scorer(reference_spec(3));
  auto params = sc.all_parameters();
  REQUIRE(params.size() >= 2);
  // The head is the final dense layer: weight then bias.
  for (std::size_t i = params.size() - 2; i < params.size(); ++i)
    std::fill(params[i]->value.begin(), params[i]->value.end(), 0.0f);
  for (std::uint64_t k = 0; k < 5; ++k) CHECK(sc.score(random_patch(64, 1, k).pixels) == 0.5);
}

TEST_CASE("shape mismatch names the offending patch") {
  const PatchScorer sc = build_scorer(reference_spec(1));
  const std::vector<Patch> ps{random_patch(64, 1, 1), random_patch(32, 1, 2)};
  try {
    sc.score_patches(ps);
    FAIL("expected a shape error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("patch 1") != std::string::npos);
  }
}

TEST_CASE("seeded construction is deterministic") {
  const PatchScorer a = build_scorer(reference_spec(7));
  const PatchScorer b = build_scorer(reference_spec(7));
  const PatchScorer c = build_scorer(reference_spec(8));
  CHECK(a.layer_checksums() == b.layer_checksums());
  CHECK(a.layer_checksums() != c.layer_checksums());
  CHECK(a.weight_layers().size() == 5);
}

TEST_CASE("frozen layers keep their parameters through training steps") {
  PatchScorer sc = build_scorer(reference_spec(2, 2));
  const auto layers = sc.weight_layers();
  CHECK_FALSE(layers[0].trainable);
  CHECK_FALSE(layers[1].trainable);
  CHECK(layers[2].trainable);
  const auto before = sc.layer_checksums();
  SgdOptimizer opt(sc.trainable_parameters(), {1e-2, 0.9, true, 0.0});
  for (std::uint64_t k = 0; k < 6; ++k) {
    sc.accumulate_gradient(random_patch(64, 1, k).pixels, k % 2 ? 1.0 : -1.0);
    opt.step();
  }
  const auto after = sc.layer_checksums();
  CHECK(after[0] == before[0]);
  CHECK(after[1] == before[1]);
  bool changed = false;
  for (std::size_t i = 2; i < after.size(); ++i) changed = changed || after[i] != before[i];
  CHECK(changed);
  CHECK_THROWS_AS(sc.set_frozen_layer_count(6), InvalidArgument);
}

TEST_CASE("checkpoint round trip") {
  const fs::path dir = scratch_dir("roundtrip");
  const PatchScorer sc = build_scorer(reference_spec(4, 1));
  save_checkpoint(dir / "m.ckpt", sc, {{"note", "x"}});
  const Checkpoint ck = load_checkpoint(dir / "m.ckpt");
  CHECK(ck.metadata.at("note") == "x");
  CHECK(ck.scorer.spec().frozen_layer_count == 1);
  CHECK(ck.scorer.layer_checksums() == sc.layer_checksums());
  std::vector<Patch> ps;
  for (std::uint64_t k = 0; k < 4; ++k) ps.push_back(random_patch(64, 1, k));
  const auto s0 = sc.score_patches(ps);
  const auto s1 = ck.scorer.score_patches(ps);
  for (std::size_t i = 0; i < s0.size(); ++i) CHECK(std::abs(s0[i] - s1[i]) <= 1e-6);
  CHECK_FALSE(fs::exists(dir / "m.ckpt.tmp"));
}

TEST_CASE("checkpoint version and corruption are detected") {
  const fs::path dir = scratch_dir("version");
  save_checkpoint(dir / "m.ckpt", build_scorer(reference_spec(5)));
  {
    std::fstream f(dir / "m.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);  // u32 version follows the 8-byte magic
    const std::uint32_t bogus = kCheckpointVersion + 1;
    f.write(reinterpret_cast<const char*>(&bogus), sizeof bogus);
  }
  try {
    load_checkpoint(dir / "m.ckpt");
    FAIL("expected a version error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  save_checkpoint(dir / "n.ckpt", build_scorer(reference_spec(5)));
  const auto size = fs::file_size(dir / "n.ckpt");
  {
    std::fstream f(dir / "n.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(static_cast<std::streamoff>(size - 20));
    const char c = static_cast<char>(f.get());
    f.seekp(static_cast<std::streamoff>(size - 20));
    f.put(static_cast<char>(c ^ 0x5a));
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "n.ckpt"), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST_CASE("pretrained path needs weights") {
  ScorerSpec spec;
  spec.backbone = BackboneId::pretrained_vgg16_style;
  spec.input_size = 32;
  spec.frozen_layer_count = 15;
  CHECK_THROWS_AS(build_scorer(spec), IoError);
  spec.weights_path = "/nonexistent/vgg.ckpt";
  CHECK_THROWS_AS(build_scorer(spec), IoError);
}

TEST_CASE("pretrained VGG-style backbone: freezing convention") {
  const fs::path dir = scratch_dir("vgg");
  ScorerSpec spec;
  spec.backbone = BackboneId::pretrained_vgg16_style;
  spec.input_size = 32;
  spec.seed = 1;
  save_checkpoint(dir / "vgg.ckpt", PatchScorer::randomly_initialized(spec));
  spec.weights_path = dir / "vgg.ckpt";

  spec.frozen_layer_count = 15;
  const PatchScorer frozen = build_scorer(spec);
  const auto layers = frozen.weight_layers();
  REQUIRE(layers.size() == 16);
  for (int i = 0; i < 15; ++i) CHECK_FALSE(layers[i].trainable);
  CHECK(layers[15].trainable);
  CHECK(frozen.input_channels() == 3);
  const double s = frozen.score(random_patch(32, 1, 1).pixels);
  CHECK(s > 0.0);
  CHECK(s < 1.0);

  spec.frozen_layer_count = 0;
  for (const LayerInfo& l : build_scorer(spec).weight_layers()) CHECK(l.trainable);

  ScorerSpec wrong = spec;
  wrong.input_size = 64;
  CHECK_THROWS_AS(build_scorer(wrong), IoError);
}
