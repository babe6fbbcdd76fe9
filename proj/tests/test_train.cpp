#include <doctest.h>

#include <set>

#include "patchmil/data.hpp"
#include "patchmil/error.hpp"
#include "patchmil/image_io.hpp"
#include "patchmil/train.hpp"
#include "support.hpp"

using namespace patchmil;
namespace fs = std::filesystem;

namespace {

Manifest small_dataset(const std::string& name, int count, int train_count) {
  SyntheticConfig cfg;
  cfg.count = count;
  cfg.image_size = 64;
  cfg.anomaly_radius_lo = 4;
  cfg.anomaly_radius_hi = 7;
  Manifest m = generate_synthetic_dataset(cfg, testing::scratch_dir(name));
  // First train_count records train, the rest validate.
  for (std::size_t i = 0; i < m.records.size(); ++i)
    m.records[i].split = static_cast<int>(i) < train_count ? Split::train : Split::val;
  return m;
}

TrainConfig small_config() {
  TrainConfig c = TrainConfig::desk_scale();
  c.grid = {64, 32, 16, false};
  c.epochs = 1;
  c.seed = 3;
  return c;
}

ScorerSpec small_spec(int input = 32) {
  ScorerSpec s;
  s.input_size = input;
  s.reference_widths = {4, 4, 8, 8};
  s.seed = 1;
  return s;
}

}  // namespace

TEST_CASE("one optimization step per image, each over one image's patches") {
  const Manifest m = small_dataset("steps", 10, 8);
  std::vector<StepInfo> steps;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) { steps.push_back(s); };
  const TrainResult r = train(small_config(), m, build_scorer(small_spec()), hooks);
  REQUIRE(steps.size() == 8);
  CHECK(r.history.epochs.size() == 1);
  CHECK(r.history.epochs[0].steps == 8);
  std::set<std::size_t> seen;
  for (const StepInfo& s : steps) {
    CHECK(s.source_ids.size() == 9);  // 3 x 3 grid
    CHECK(std::set<std::int64_t>(s.source_ids.begin(), s.source_ids.end()).size() == 1);
    CHECK(s.source_ids[0] == static_cast<std::int64_t>(s.record_index));
    seen.insert(s.record_index);
  }
  CHECK(seen.size() == 8);
}

TEST_CASE("full-scale grid: 64 patches per step") {
  fs::path dir = testing::scratch_dir("full_grid");
  fs::create_directories(dir / "img");
  Manifest m;
  m.base_dir = dir;
  for (int i = 0; i < 2; ++i) {
    Image img(1024, 1024, 1, 0.2f);
    img.at(i, i) = 1.0f;
    io::write_gray_png(dir / "img" / (std::to_string(i) + ".png"), img);
    m.records.push_back({"img/" + std::to_string(i) + ".png", i ? Label::positive : Label::negative, Split::train, "", ""});
  }
  TrainConfig c;  // full-scale grid
  c.epochs = 1;
  c.augment.enabled = false;
  c.validate_each_epoch = false;
  std::vector<std::size_t> batch_sizes;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) {
    batch_sizes.push_back(s.source_ids.size());
    CHECK(std::set<std::int64_t>(s.source_ids.begin(), s.source_ids.end()).size() == 1);
  };
  ScorerSpec spec = small_spec(224);
  spec.reference_widths = {2, 2, 2, 2};
  train(c, m, build_scorer(spec), hooks);
  CHECK(batch_sizes == std::vector<std::size_t>{64, 64});
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  const Manifest m = small_dataset("lr0", 8, 6);
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  const auto before = build_scorer(small_spec()).layer_checksums();
  CHECK(train(c, m, build_scorer(small_spec()), {}).scorer.layer_checksums() == before);
}

TEST_CASE("frozen layers survive training and at least one trainable layer moves") {
  const Manifest m = small_dataset("frozen", 8, 6);
  TrainConfig c = small_config();
  c.epochs = 3;
  ScorerSpec spec = small_spec();
  spec.frozen_layer_count = 3;
  const auto before = build_scorer(spec).layer_checksums();
  const auto after = train(c, m, build_scorer(spec), {}).scorer.layer_checksums();
  for (int i = 0; i < 3; ++i) CHECK(after[i] == before[i]);
  CHECK((after[3] != before[3] || after[4] != before[4]));
}

TEST_CASE("identical seeds give identical histories") {
  const Manifest m = small_dataset("seed", 10, 7);
  TrainConfig c = small_config();
  c.epochs = 3;
  const TrainResult a = train(c, m, build_scorer(small_spec()), {});
  const TrainResult b = train(c, m, build_scorer(small_spec()), {});
  CHECK(a.history.losses() == b.history.losses());
  CHECK(a.scorer.layer_checksums() == b.scorer.layer_checksums());
  for (std::size_t e = 0; e < 3; ++e) CHECK(a.history.epochs[e].val_auc == b.history.epochs[e].val_auc);

  c.seed = 4;
  CHECK(train(c, m, build_scorer(small_spec()), {}).history.losses() != a.history.losses());
}

TEST_CASE("annotations stay unread during training") {
  const Manifest m = small_dataset("poison", 8, 6);
  const std::size_t reads = annotation_read_count();
  bool poisoned_throughout = true;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo&) { poisoned_throughout = poisoned_throughout && AnnotationPoison::active(); };
  train(small_config(), m, build_scorer(small_spec()), hooks);
  CHECK(poisoned_throughout);
  CHECK(annotation_read_count() == reads);
  CHECK_FALSE(AnnotationPoison::active());
}

TEST_CASE("checkpoints, history file and divergence") {
  const Manifest m = small_dataset("ckpt", 8, 6);
  const fs::path out = testing::scratch_dir("ckpt_out");
  TrainConfig c = small_config();
  c.epochs = 2;
  c.checkpoint_every = 1;
  c.output_dir = out;
  const TrainResult r = train(c, m, build_scorer(small_spec()), {});
  CHECK(fs::exists(out / "checkpoints" / "epoch_0001.ckpt"));
  CHECK(fs::exists(out / "checkpoints" / "epoch_0002.ckpt"));
  CHECK(fs::exists(out / "checkpoints" / "last.ckpt"));
  CHECK(fs::exists(out / "history.jsonl"));
  const Checkpoint ck = load_checkpoint(out / "checkpoints" / "last.ckpt");
  CHECK(ck.metadata.at("history").at("epochs").size() == 2);
  CHECK(ck.scorer.layer_checksums() == r.scorer.layer_checksums());

  c.learning_rate = 1e30;
  c.output_dir.clear();
  try {
    train(c, m, build_scorer(small_spec()), {});
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(std::string(e.what()).find("last good checkpoint") != std::string::npos);
  }
}

TEST_CASE("config validation and JSON overlay") {
  TrainConfig c = TrainConfig::desk_scale();
  CHECK(c.grid.image_size == 256);
  CHECK(c.epochs == 50);
  CHECK(c.learning_rate == 1e-3);
  const TrainConfig full;
  CHECK(full.learning_rate == 1e-5);
  CHECK(full.momentum == 0.9);
  CHECK(full.decay == 1e-6);
  CHECK(full.epochs == 250);
  CHECK(full.grid.image_size == 1024);

  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  const TrainConfig over = train_config_from_json({{"epochs", 7}, {"aggregator", "noisy_or"}}, c);
  CHECK(over.epochs == 7);
  CHECK(over.aggregator == Aggregator::noisy_or);
  CHECK(over.learning_rate == 1e-3);

  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);

  const Manifest m = small_dataset("mismatch", 8, 6);
  CHECK_THROWS_AS(train(small_config(), m, build_scorer(small_spec(64)), {}), InvalidArgument);
}
