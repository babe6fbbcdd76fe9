// patchmil: synthetic data generation, MIL training, evaluation and patch
// overlay rendering from the command line.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchmil/data.hpp"
#include "patchmil/eval.hpp"
#include "patchmil/image_io.hpp"
#include "patchmil/model.hpp"
#include "patchmil/simd/kernels.hpp"
#include "patchmil/train.hpp"
#include "patchmil/version.hpp"
#include "patchmil/viz.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace patchmil;

namespace {

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open config file: " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("config file " + p.string() + " is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& p, const json& j) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Flat run configuration: file values first, then command-line overrides.
struct RunConfig {
  json file = json::object();
  std::string file_text;
  json overrides = json::object();

  json merged() const {
    json m = file;
    for (auto& [k, v] : overrides.items()) m[k] = v;
    return m;
  }
};

ScorerSpec scorer_spec_from(const json& cfg) {
  ScorerSpec s;
  s.backbone = backbone_from_string(cfg.value("backbone", std::string("reference_small_cnn")));
  const bool pretrained = s.backbone == BackboneId::pretrained_vgg16_style;
  s.input_size = cfg.value("patch_size", pretrained ? 224 : 64);
  s.frozen_layer_count = cfg.value("frozen_layers", pretrained ? 15 : 0);
  s.seed = cfg.value("seed", std::uint64_t{0});
  if (cfg.contains("reference_widths")) s.reference_widths = cfg.at("reference_widths").get<std::vector<int>>();
  if (cfg.contains("weights_path")) s.weights_path = cfg.at("weights_path").get<std::string>();
  return s;
}

TrainConfig train_config_from(const json& cfg) {
  const bool pretrained = cfg.value("backbone", std::string("reference_small_cnn")) == "pretrained_vgg16_style";
  return train_config_from_json(cfg, pretrained ? TrainConfig{} : TrainConfig::desk_scale());
}

OverlayStyle overlay_style_from(const json& cfg) {
  OverlayStyle s;
  s.max_thickness_px = cfg.value("max_thickness_px", s.max_thickness_px);
  s.vanish_threshold = cfg.value("vanish_threshold", s.vanish_threshold);
  s.mask_alpha = cfg.value("mask_alpha", s.mask_alpha);
  return s;
}

GridConfig grid_from(const json& cfg, const json& checkpoint_meta) {
  // Geometry the checkpoint was trained with, unless overridden.
  json trained = json::object();
  if (checkpoint_meta.contains("history")) trained = checkpoint_meta["history"].value("config", json::object());
  GridConfig g;
  auto pick = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    if (cfg.contains(key)) return cfg.at(key).get<T>();
    if (trained.contains(key)) return trained.at(key).get<T>();
    return fallback;
  };
  g.image_size = pick("image_size", 256);
  g.patch_size = pick("patch_size", 64);
  g.stride = pick("stride", 32);
  g.edge_snap = pick("edge_snap", false);
  return g;
}

json run_info(std::uint64_t seed) {
  return {{"seed", seed},
          {"versions",
           {{"library", version::kLibrary}, {"tiling", version::kTiling}, {"mil_head", version::kMilHead},
            {"model", version::kModel}, {"augment", version::kAugment}, {"data", version::kData},
            {"train", version::kTrain}, {"eval", version::kEval}, {"viz", version::kViz}}},
          {"simd_kernels", std::string(simd::active().name)},
          {"workers", worker_count()}};
}

int cmd_synth(const RunConfig& rc, const std::string& out) {
  const json cfg = rc.merged();
  SyntheticConfig sc;
  sc.count = cfg.value("count", sc.count);
  sc.positive_fraction = cfg.value("positive_fraction", sc.positive_fraction);
  sc.image_size = cfg.value("image_size", sc.image_size);
  sc.anomaly_radius_lo = cfg.value("anomaly_radius_lo", sc.anomaly_radius_lo);
  sc.anomaly_radius_hi = cfg.value("anomaly_radius_hi", sc.anomaly_radius_hi);
  sc.contrast_lo = cfg.value("contrast_lo", sc.contrast_lo);
  sc.contrast_hi = cfg.value("contrast_hi", sc.contrast_hi);
  sc.texture_sigma = cfg.value("texture_sigma", sc.texture_sigma);
  sc.coarse_sigma = cfg.value("coarse_sigma", sc.coarse_sigma);
  sc.texture_amplitude = cfg.value("texture_amplitude", sc.texture_amplitude);
  sc.coarse_amplitude = cfg.value("coarse_amplitude", sc.coarse_amplitude);
  sc.seed = cfg.value("seed", sc.seed);
  const fs::path dir = out.empty() ? fs::path(cfg.value("out_dir", std::string("synthetic"))) : fs::path(out);
  const Manifest m = generate_synthetic_dataset(sc, dir);
  std::cout << "wrote " << m.records.size() << " images and " << (dir / "manifest.csv").string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& rc) {
  const json cfg = rc.merged();
  if (!cfg.contains("manifest")) throw InvalidArgument("train: no manifest given (--manifest or \"manifest\" key)");
  if (!cfg.contains("out_dir")) throw InvalidArgument("train: no output directory given (--out or \"out_dir\" key)");
  const fs::path out = cfg.at("out_dir").get<std::string>();
  TrainConfig tc = train_config_from(cfg);
  tc.output_dir = out;
  const ScorerSpec spec = scorer_spec_from(cfg);

  Manifest manifest = load_manifest(cfg.at("manifest").get<std::string>(), tc.grid.image_size);
  const bool has_splits = std::any_of(manifest.records.begin(), manifest.records.end(),
                                      [](const ImageRecord& r) { return r.split != Split::unassigned; });
  if (!has_splits) manifest = split_train_val(std::move(manifest), cfg.value("val_fraction", 0.2), tc.seed);

  fs::create_directories(out);
  // Record paths relative to the run directory's copy of the manifest.
  Manifest echoed = manifest;
  for (auto& r : echoed.records) {
    r.image_path = fs::absolute(manifest.resolve(r.image_path)).lexically_normal().string();
    if (r.annotated()) r.annotation_path = fs::absolute(manifest.resolve(r.annotation_path)).lexically_normal().string();
  }
  write_manifest(out / "manifest_split.csv", echoed);
  {
    std::ofstream verbatim(out / "config.json", std::ios::trunc);
    verbatim << (rc.file_text.empty() ? std::string("{}\n") : rc.file_text);
  }
  json resolved = to_json(tc);
  resolved["scorer"] = to_json(spec);
  resolved["manifest"] = cfg.at("manifest");
  resolved["out_dir"] = out.string();
  resolved["overrides"] = rc.overrides;
  write_json_file(out / "resolved_config.json", resolved);
  write_json_file(out / "run_info.json", run_info(tc.seed));

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    std::printf("epoch %3d  loss %.5f  val_auc %s  %.1fs\n", e.epoch, e.mean_loss,
                e.val_auc ? std::to_string(*e.val_auc).c_str() : "n/a", e.wall_seconds);
    std::fflush(stdout);
  };
  TrainResult result = train(tc, manifest, build_scorer(spec), hooks);
  write_json_file(out / "history.json", to_json(result.history));
  std::cout << "final checkpoint: " << (out / "checkpoints" / "last.ckpt").string() << '\n';
  return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& split_name) {
  const json cfg = rc.merged();
  if (!cfg.contains("checkpoint")) throw InvalidArgument("eval: no checkpoint given");
  if (!cfg.contains("manifest")) throw InvalidArgument("eval: no manifest given");
  if (!cfg.contains("out_dir")) throw InvalidArgument("eval: no output directory given");
  const Checkpoint ck = load_checkpoint(cfg.at("checkpoint").get<std::string>());
  const GridConfig gc = grid_from(cfg, ck.metadata);
  const Manifest manifest = load_manifest(cfg.at("manifest").get<std::string>(), gc.image_size);
  std::vector<ImageRecord> records;
  if (split_name == "all") records = manifest.records;
  else records = manifest.select(split_from_string(split_name));
  if (records.empty()) throw InvalidArgument("eval: split '" + split_name + "' is empty");

  EvalReport rep = evaluate(ck.scorer, manifest, records, gc);
  if (!rep.auc) throw UndefinedAuc("undefined AUC: split '" + split_name + "' contains only one class");
  rep.config["checkpoint"] = cfg.at("checkpoint");
  rep.config["split"] = split_name;
  const fs::path out = cfg.at("out_dir").get<std::string>();
  fs::create_directories(out);
  write_json_file(out / "report.json", to_json(rep));
  write_scores_csv(out / "scores.csv", rep);
  std::printf("auc %.6f  n_pos %zu  n_neg %zu", *rep.auc, rep.n_pos, rep.n_neg);
  if (rep.pointing_game_accuracy) std::printf("  pointing_game %.4f (%zu)", *rep.pointing_game_accuracy, rep.pointing_game_count);
  std::printf("\n");
  return 0;
}

int cmd_localize(const RunConfig& rc, const std::vector<std::string>& images, const std::vector<std::string>& annotations) {
  const json cfg = rc.merged();
  if (!cfg.contains("checkpoint")) throw InvalidArgument("localize: no checkpoint given");
  if (!cfg.contains("out_dir")) throw InvalidArgument("localize: no output directory given");
  if (images.empty()) throw InvalidArgument("localize: no --image given");
  if (!annotations.empty() && annotations.size() != images.size())
    throw InvalidArgument("localize: give one --annotation per --image or none");
  const Checkpoint ck = load_checkpoint(cfg.at("checkpoint").get<std::string>());
  const GridConfig gc = grid_from(cfg, ck.metadata);
  const OverlayStyle style = overlay_style_from(cfg);
  const PatchGrid grid = make_grid(gc.image_size, gc.image_size, gc.patch_size, gc.stride, gc.edge_snap);
  const fs::path out = cfg.at("out_dir").get<std::string>();
  fs::create_directories(out);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image img = standardize_image(io::read_gray(images[i]), gc.image_size, 1);
    const ScoreGrid sg = make_score_grid(ck.scorer.score_patches(tile_image(img, grid)), grid);
    std::optional<Annotation> ann;
    if (!annotations.empty()) {
      Manifest single;
      ImageRecord r;
      r.image_path = images[i];
      r.annotation_path = annotations[i];
      ann = load_annotation(single, r, gc.image_size, gc.image_size);
    }
    const fs::path stem = fs::path(images[i]).stem();
    const fs::path png = out / (stem.string() + "_overlay.png");
    io::write_rgb_png(png, render_overlay(img, sg, grid, style, ann));
    write_json_file(out / (stem.string() + "_overlay.json"), overlay_sidecar(sg, grid, style));
    std::printf("%s  image_score %.6f  argmax (%d,%d)\n", png.string().c_str(), sg.image_score, sg.argmax.row, sg.argmax.col);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-instance patch scoring for weakly supervised image classification and localization"};
  app.require_subcommand(1);

  std::string config_path;
  RunConfig rc;
  auto add_common = [&](CLI::App* sub) { sub->add_option("--config", config_path, "JSON run configuration"); };

  // Numeric overrides shared by several subcommands.
  std::optional<std::uint64_t> seed;
  std::optional<int> count, epochs, image_size, patch_size, stride;
  std::optional<double> positive_fraction, lr, val_fraction;
  std::string out, manifest, checkpoint, backbone, split = "val";
  std::vector<std::string> images, annotations;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground-truth masks");
  add_common(synth);
  synth->add_option("--count", count, "Number of images");
  synth->add_option("--positive-fraction", positive_fraction, "Fraction of positive images");
  synth->add_option("--image-size", image_size, "Image side length in px");
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--out", out, "Output directory");

  auto* trn = app.add_subcommand("train", "Train a patch scorer with the max-over-patches objective");
  add_common(trn);
  trn->add_option("--manifest", manifest, "Manifest CSV");
  trn->add_option("--out", out, "Run directory");
  trn->add_option("--epochs", epochs, "Epochs");
  trn->add_option("--seed", seed, "Top-level seed");
  trn->add_option("--lr", lr, "Learning rate");
  trn->add_option("--val-fraction", val_fraction, "Validation fraction when the manifest has no splits");
  trn->add_option("--backbone", backbone, "reference_small_cnn | pretrained_vgg16_style");
  trn->add_option("--image-size", image_size, "Standardized image size");
  trn->add_option("--patch-size", patch_size, "Patch size");
  trn->add_option("--stride", stride, "Patch stride");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint: AUC and pointing game");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file");
  ev->add_option("--manifest", manifest, "Manifest CSV (with splits)");
  ev->add_option("--split", split, "val | train | all")->check(CLI::IsMember({"val", "train", "all"}));
  ev->add_option("--out", out, "Output directory for report.json and scores.csv");

  auto* loc = app.add_subcommand("localize", "Render patch-score overlays");
  add_common(loc);
  loc->add_option("--checkpoint", checkpoint, "Checkpoint file");
  loc->add_option("--image", images, "Input image (repeatable)");
  loc->add_option("--annotation", annotations, "Ground-truth mask or box file per image (repeatable)");
  loc->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!config_path.empty()) {
      rc.file = read_json_file(config_path);
      rc.file_text = read_text(config_path);
    }
    auto& o = rc.overrides;
    if (seed) o["seed"] = *seed;
    if (count) o["count"] = *count;
    if (epochs) o["epochs"] = *epochs;
    if (image_size) o["image_size"] = *image_size;
    if (patch_size) o["patch_size"] = *patch_size;
    if (stride) o["stride"] = *stride;
    if (positive_fraction) o["positive_fraction"] = *positive_fraction;
    if (lr) o["learning_rate"] = *lr;
    if (val_fraction) o["val_fraction"] = *val_fraction;
    if (!backbone.empty()) o["backbone"] = backbone;
    if (!manifest.empty()) o["manifest"] = manifest;
    if (!checkpoint.empty()) o["checkpoint"] = checkpoint;
    if (!out.empty()) o["out_dir"] = out;

    if (synth->parsed()) return cmd_synth(rc, out);
    if (trn->parsed()) return cmd_train(rc);
    if (ev->parsed()) return cmd_eval(rc, split);
    if (loc->parsed()) return cmd_localize(rc, images, annotations);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
