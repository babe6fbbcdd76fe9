#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "patchmil/data.hpp"
#include "patchmil/error.hpp"
#include "patchmil/image_io.hpp"
#include "patchmil/rng.hpp"

using namespace patchmil;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("patchmil_test_data_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  out << text;
}

void touch_png(const fs::path& p, int size = 8) { io::write_gray_png(p, Image(size, size, 1, 0.5f)); }

Manifest synthetic_counts(int n_pos, int n_neg) {
  Manifest m;
  for (int i = 0; i < n_pos + n_neg; ++i) {
    ImageRecord r;
    r.image_path = "img" + std::to_string(i) + ".png";
    r.label = i < n_pos ? Label::positive : Label::negative;
    m.records.push_back(r);
  }
  return m;
}

std::map<std::pair<int, int>, int> split_counts(const Manifest& m) {
  std::map<std::pair<int, int>, int> c;
  for (const ImageRecord& r : m.records) ++c[{to_int(r.label), static_cast<int>(r.split)}];
  return c;
}

std::string error_of(const fs::path& p) {
  try {
    load_manifest(p);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

const char* kHeader = "image_path,label,split,annotation_path,dataset_tag\n";

}  // namespace

TEST_CASE("load_manifest: well-formed file") {
  const fs::path d = scratch_dir("ok");
  fs::create_directories(d / "im");
  for (int i = 0; i < 4; ++i) touch_png(d / "im" / ("a" + std::to_string(i) + ".png"));
  write_text(d / "boxes.txt", "1,1,4,4\n");
  write_text(d / "m.csv", std::string(kHeader) +
                              "im/a0.png,0,train,,uwmc\n"
                              "im/a1.png,1,val,boxes.txt,kaggle\n"
                              "im/a2.png,1,,,mimic\n"
                              "im/a3.png,0,,,\n");
  const Manifest m = load_manifest(d / "m.csv", 8);
  REQUIRE(m.records.size() == 4);
  CHECK(m.records[0].split == Split::train);
  CHECK(m.records[1].label == Label::positive);
  CHECK(m.records[1].annotated());
  CHECK(m.records[2].split == Split::unassigned);
  CHECK(m.records[2].dataset_tag == "mimic");
  CHECK(m.resolve(m.records[3].image_path) == d / "im" / "a3.png");

  write_manifest(d / "copy.csv", m);
  const Manifest again = load_manifest(d / "copy.csv");
  CHECK(again.records.size() == 4);
  CHECK(again.records[1].annotation_path == "boxes.txt");
}

TEST_CASE("load_manifest: rejections name the row and field") {
  const fs::path d = scratch_dir("bad");
  touch_png(d / "a.png");
  touch_png(d / "b.png");

  write_text(d / "label.csv", std::string(kHeader) + "a.png,0,,,\nb.png,2,,,\n");
  const std::string label_err = error_of(d / "label.csv");
  CHECK(label_err.find("row 2") != std::string::npos);
  CHECK(label_err.find("label") != std::string::npos);

  write_text(d / "dup.csv", std::string(kHeader) + "a.png,0,,,\nb.png,1,,,\na.png,1,,,\n");
  const std::string dup_err = error_of(d / "dup.csv");
  CHECK(dup_err.find("duplicate") != std::string::npos);
  CHECK(dup_err.find("a.png") != std::string::npos);

  write_text(d / "missing.csv", std::string(kHeader) + "x.png,0,,,\na.png,0,,,\ny.png,1,,,\n");
  const std::string missing_err = error_of(d / "missing.csv");
  CHECK(missing_err.find("x.png") != std::string::npos);
  CHECK(missing_err.find("y.png") != std::string::npos);

  write_text(d / "split.csv", std::string(kHeader) + "a.png,0,test,,\n");
  CHECK(error_of(d / "split.csv").find("split") != std::string::npos);

  write_text(d / "header.csv", "path,label\na.png,0\n");
  CHECK(error_of(d / "header.csv").find("header") != std::string::npos);

  write_text(d / "box.txt", "0,0,20,20\n");
  write_text(d / "bounds.csv", std::string(kHeader) + "a.png,1,,box.txt,\n");
  CHECK_THROWS_AS(load_manifest(d / "bounds.csv", 8), IoError);
}

TEST_CASE("split_train_val: stratified counts") {
  const Manifest even = split_train_val(synthetic_counts(500, 500), 0.2, 1);
  auto c = split_counts(even);
  CHECK(c[{1, static_cast<int>(Split::val)}] == 100);
  CHECK(c[{0, static_cast<int>(Split::val)}] == 100);
  CHECK(c[{1, static_cast<int>(Split::train)}] == 400);

  const Manifest odd = split_train_val(synthetic_counts(437, 566), 0.2, 1);
  c = split_counts(odd);
  const int pos_val = c[{1, static_cast<int>(Split::val)}];
  CHECK((pos_val == 87 || pos_val == 88));  // 437 * 0.2 = 87.4
  CHECK(c[{0, static_cast<int>(Split::val)}] == 113);  // 566 * 0.2 = 113.2

  CHECK_THROWS_AS(split_train_val(synthetic_counts(1, 10), 0.2, 1), InvalidArgument);
  CHECK_THROWS_AS(split_train_val(synthetic_counts(5, 5), 1.0, 1), InvalidArgument);
}

TEST_CASE("split_train_val: determinism and property over random manifests") {
  Rng rng = substream(77, "manifests");
  for (int trial = 0; trial < 100; ++trial) {
    const int n_pos = 2 + static_cast<int>(uniform_index(rng, 60));
    const int n_neg = 2 + static_cast<int>(uniform_index(rng, 60));
    const double f = 0.05 + 0.9 * uniform(rng);
    const std::uint64_t seed = uniform_index(rng, 1000);
    const Manifest a = split_train_val(synthetic_counts(n_pos, n_neg), f, seed);
    const Manifest b = split_train_val(synthetic_counts(n_pos, n_neg), f, seed);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      REQUIRE(a.records[i].split == b.records[i].split);
      REQUIRE(a.records[i].split != Split::unassigned);
    }
    auto c = split_counts(a);
    for (auto [cls, n] : {std::pair{1, n_pos}, std::pair{0, n_neg}}) {
      const int val = c[{cls, static_cast<int>(Split::val)}];
      CHECK(std::abs(val - n * f) <= 1.0);
      CHECK(val >= 1);
      CHECK(val <= n - 1);
    }
  }
}

TEST_CASE("synthetic generator") {
  const fs::path d = scratch_dir("synth");
  SyntheticConfig cfg;
  cfg.count = 10;
  cfg.image_size = 64;
  cfg.anomaly_radius_lo = 4;
  cfg.anomaly_radius_hi = 8;
  const Manifest m = generate_synthetic_dataset(cfg, d / "a");
  REQUIRE(m.records.size() == 10);
  CHECK(std::count_if(m.records.begin(), m.records.end(), [](const ImageRecord& r) { return r.label == Label::positive; }) == 5);
  CHECK(fs::exists(d / "a" / "synth_config.json"));

  const Manifest loaded = load_manifest(d / "a" / "manifest.csv", 64);
  for (const ImageRecord& r : loaded.records) {
    CHECK(r.annotated() == (r.label == Label::positive));
    if (!r.annotated()) continue;
    const Image mask = io::read_gray(loaded.resolve(r.annotation_path));
    double area = 0.0;
    for (float v : mask.data) area += v > 0.5f;
    CHECK(area > 0.0);
  }

  generate_synthetic_dataset(cfg, d / "b");
  for (const ImageRecord& r : m.records) {
    std::ifstream fa(d / "a" / r.image_path, std::ios::binary), fb(d / "b" / r.image_path, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(!sa.empty());
    CHECK(sa == sb);
  }
}

TEST_CASE("synthetic blobs have the configured low contrast") {
  SyntheticConfig cfg;
  for (std::uint64_t i = 0; i < 6; ++i) {
    const auto blobs = draw_blobs(cfg, i);
    CHECK((blobs.size() == 1 || blobs.size() == 2));
    for (const BlobSpec& b : blobs) {
      CHECK(b.contrast >= 0.10);
      CHECK(b.contrast <= 0.20);
      const SyntheticImage bare = render_synthetic(cfg, i, {});
      const SyntheticImage with = render_synthetic(cfg, i, {b});
      const auto [mn, mx] = std::minmax_element(bare.image.data.begin(), bare.image.data.end());
      float peak = 0.0f;
      for (std::size_t k = 0; k < bare.image.data.size(); ++k)
        peak = std::max(peak, with.image.data[k] - bare.image.data[k]);
      // The bump is sampled at pixel centers, so its top can sit slightly below the nominal peak.
      CHECK(peak / (*mx - *mn) == doctest::Approx(b.contrast).epsilon(0.05));
    }
  }
}

TEST_CASE("annotation poisoning") {
  const fs::path d = scratch_dir("poison");
  SyntheticConfig cfg;
  cfg.count = 4;
  cfg.image_size = 32;
  cfg.anomaly_radius_lo = 3;
  cfg.anomaly_radius_hi = 5;
  const Manifest m = generate_synthetic_dataset(cfg, d);
  const auto pos = std::find_if(m.records.begin(), m.records.end(), [](const ImageRecord& r) { return r.annotated(); });
  REQUIRE(pos != m.records.end());

  const std::size_t before = annotation_read_count();
  CHECK(load_annotation(m, *pos, 32, 32).is_mask());
  CHECK(annotation_read_count() == before + 1);
  {
    AnnotationPoison guard;
    CHECK(AnnotationPoison::active());
    CHECK_THROWS_AS(load_annotation(m, *pos, 32, 32), AnnotationPoisoned);
  }
  CHECK_FALSE(AnnotationPoison::active());
  CHECK(annotation_read_count() == before + 1);
  CHECK_FALSE(load_annotation(m, *pos, 32, 32).empty());
}
