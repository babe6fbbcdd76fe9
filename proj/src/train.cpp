#include "patchmil/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "patchmil/image_io.hpp"
#include "patchmil/optim.hpp"
#include "patchmil/tiling.hpp"

namespace patchmil {
namespace fs = std::filesystem;

namespace {

std::string aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::max: return "max";
    case Aggregator::log_sum_exp: return "log_sum_exp";
    case Aggregator::noisy_or: return "noisy_or";
  }
  return "max";
}

Aggregator aggregator_from_name(const std::string& s) {
  if (s == "max") return Aggregator::max;
  if (s == "log_sum_exp") return Aggregator::log_sum_exp;
  if (s == "noisy_or") return Aggregator::noisy_or;
  throw InvalidArgument("unknown aggregator: " + s);
}

double score_standardized(const PatchScorer& scorer, const Image& img, const PatchGrid& grid) {
  const auto patches = tile_image(img, grid);
  return aggregate_max(scorer.score_patches(patches)).image_score;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0 && std::isfinite(learning_rate))) throw InvalidArgument("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (!(decay >= 0.0) || !(weight_decay >= 0.0)) throw InvalidArgument("decay terms must be >= 0");
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (checkpoint_every < 1) throw InvalidArgument("checkpoint_every must be >= 1");
  augment.validate();
  make_grid(grid.image_size, grid.image_size, grid.patch_size, grid.stride, grid.edge_snap);
}

TrainConfig TrainConfig::desk_scale() {
  TrainConfig c;
  c.grid = {256, 64, 32, false};
  c.epochs = 50;
  c.learning_rate = 1e-3;
  c.checkpoint_every = 10;
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"nesterov", c.nesterov},
          {"decay", c.decay},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"image_size", c.grid.image_size},
          {"patch_size", c.grid.patch_size},
          {"stride", c.grid.stride},
          {"edge_snap", c.grid.edge_snap},
          {"augment_enabled", c.augment.enabled},
          {"augment_flip_prob", c.augment.flip_horizontal_prob},
          {"augment_scale_lo", c.augment.scale_lo},
          {"augment_scale_hi", c.augment.scale_hi},
          {"augment_translate", c.augment.translate_fraction},
          {"augment_rotate_deg", c.augment.rotate_degrees},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"poison_annotations", c.poison_annotations},
          {"aggregator", aggregator_name(c.aggregator)},
          {"bce_epsilon", c.bce_epsilon},
          {"validate_each_epoch", c.validate_each_epoch}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("learning_rate", c.learning_rate);
  get("momentum", c.momentum);
  get("nesterov", c.nesterov);
  get("decay", c.decay);
  get("weight_decay", c.weight_decay);
  get("epochs", c.epochs);
  get("image_size", c.grid.image_size);
  get("patch_size", c.grid.patch_size);
  get("stride", c.grid.stride);
  get("edge_snap", c.grid.edge_snap);
  get("augment_enabled", c.augment.enabled);
  get("augment_flip_prob", c.augment.flip_horizontal_prob);
  get("augment_scale_lo", c.augment.scale_lo);
  get("augment_scale_hi", c.augment.scale_hi);
  get("augment_translate", c.augment.translate_fraction);
  get("augment_rotate_deg", c.augment.rotate_degrees);
  get("seed", c.seed);
  get("checkpoint_every", c.checkpoint_every);
  get("poison_annotations", c.poison_annotations);
  get("bce_epsilon", c.bce_epsilon);
  get("validate_each_epoch", c.validate_each_epoch);
  if (j.contains("aggregator")) c.aggregator = aggregator_from_name(j.at("aggregator").get<std::string>());
  return c;
}

nlohmann::json to_json(const EpochRecord& e) {
  return {{"epoch", e.epoch},
          {"mean_loss", e.mean_loss},
          {"val_auc", e.val_auc ? nlohmann::json(*e.val_auc) : nlohmann::json(nullptr)},
          {"wall_seconds", e.wall_seconds},
          {"steps", e.steps},
          {"learning_rate", e.learning_rate}};
}

std::vector<double> TrainHistory::losses() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.mean_loss);
  return out;
}

nlohmann::json to_json(const TrainHistory& h) {
  nlohmann::json ep = nlohmann::json::array();
  for (const auto& e : h.epochs) ep.push_back(to_json(e));
  nlohmann::json j{{"epochs", ep}, {"config", h.config}, {"seeds", h.seeds}, {"decay_interpretation", h.decay_interpretation}};
  if (h.best_val_auc) j["best_val_auc"] = *h.best_val_auc;
  if (h.best_checkpoint) j["best_checkpoint"] = h.best_checkpoint->string();
  return j;
}

TrainResult train(const TrainConfig& config, const Manifest& manifest, PatchScorer scorer, const TrainHooks& hooks) {
  config.validate();
  if (scorer.spec().input_size != config.grid.patch_size)
    throw InvalidArgument("scorer input size " + std::to_string(scorer.spec().input_size) + " differs from patch size " +
                          std::to_string(config.grid.patch_size));
  const std::vector<ImageRecord> train_set = manifest.select(Split::train);
  const std::vector<ImageRecord> val_set = manifest.select(Split::val);
  if (train_set.empty()) throw InvalidArgument("manifest has no records in the train split (assign splits first)");

  std::optional<AnnotationPoison> poison;
  if (config.poison_annotations) poison.emplace();

  const GridConfig& gc = config.grid;
  const PatchGrid grid = make_grid(gc.image_size, gc.image_size, gc.patch_size, gc.stride, gc.edge_snap);
  auto load_all = [&](const std::vector<ImageRecord>& recs) {
    std::vector<Image> imgs;
    imgs.reserve(recs.size());
    for (const auto& r : recs) imgs.push_back(standardize_image(io::read_gray(manifest.resolve(r.image_path)), gc.image_size, 1));
    return imgs;
  };
  const std::vector<Image> train_images = load_all(train_set);
  const std::vector<Image> val_images = config.validate_each_epoch ? load_all(val_set) : std::vector<Image>{};
  std::vector<int> val_labels;
  for (const auto& r : val_set) val_labels.push_back(to_int(r.label));
  const bool can_auc = std::count(val_labels.begin(), val_labels.end(), 1) > 0 &&
                       std::count(val_labels.begin(), val_labels.end(), 0) > 0;

  TrainHistory history;
  history.config = to_json(config);
  history.config["scorer"] = to_json(scorer.spec());
  history.seeds = {{"seed", config.seed}, {"streams", {"split", "init", "augment", "shuffle"}}};
  history.decay_interpretation = "learning-rate decay lr/(1+decay*step); weight_decay=" + std::to_string(config.weight_decay);

  fs::path ckpt_dir;
  std::ofstream history_out;
  if (!config.output_dir.empty()) {
    ckpt_dir = config.output_dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    history_out.open(config.output_dir / "history.jsonl", std::ios::trunc);
    if (!history_out) throw IoError("cannot write " + (config.output_dir / "history.jsonl").string());
  }
  std::optional<fs::path> last_good;

  SgdOptimizer optimizer(scorer.trainable_parameters(),
                         {config.learning_rate, config.momentum, config.nesterov, config.weight_decay}, config.decay);
  MilObjective objective(config.aggregator, config.bce_epsilon);
  Rng shuffle_rng = substream(config.seed, "shuffle");
  Rng augment_rng = substream(config.seed, "augment");
  scorer.zero_grad();

  auto diverged = [&](const std::string& what) -> TrainingDiverged {
    return TrainingDiverged(what + "; last good checkpoint: " + (last_good ? last_good->string() : std::string("none")));
  };

  std::size_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(shuffle_rng, i + 1)]);

    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const Augmented aug = random_augment(train_images[idx], config.augment, augment_rng);
      const std::vector<Patch> patches = tile_image(aug.image, grid, static_cast<std::int64_t>(idx));
      const std::vector<double> scores = scorer.score_patches(patches);
      for (double s : scores)
        if (!std::isfinite(s)) throw diverged("non-finite patch score at epoch " + std::to_string(epoch));
      std::vector<std::int64_t> tags(patches.size());
      std::transform(patches.begin(), patches.end(), tags.begin(), [](const Patch& p) { return p.source_id; });

      const double loss = objective.forward_tagged(scores, tags, train_set[idx].label);
      if (!std::isfinite(loss)) throw diverged("non-finite loss at epoch " + std::to_string(epoch));
      const std::vector<double> grad = objective.backward();
      for (std::size_t k = 0; k < grad.size(); ++k)
        if (grad[k] != 0.0) scorer.accumulate_gradient(patches[k].pixels, grad[k]);
      try {
        optimizer.step();
      } catch (const InvalidArgument& e) {
        throw diverged(std::string("optimizer rejected update: ") + e.what());
      }
      loss_sum += loss;
      ++step;
      if (hooks.on_step)
        hooks.on_step({epoch, step, idx, std::move(tags), loss, objective.image_score(), objective.argmax()});
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = order.size();
    rec.mean_loss = loss_sum / static_cast<double>(order.size());
    rec.learning_rate = optimizer.current_learning_rate();
    if (!std::isfinite(rec.mean_loss)) throw diverged("non-finite mean loss at epoch " + std::to_string(epoch));
    if (config.validate_each_epoch && can_auc) {
      std::vector<double> val_scores;
      for (const Image& img : val_images) val_scores.push_back(score_standardized(scorer, img, grid));
      rec.val_auc = roc_auc(val_scores, val_labels);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(rec);

    if (!ckpt_dir.empty()) {
      history_out << to_json(rec).dump() << '\n';
      history_out.flush();
      const nlohmann::json meta{{"history", to_json(history)}, {"epoch", epoch}};
      if (epoch % config.checkpoint_every == 0 || epoch == config.epochs) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
        save_checkpoint(ckpt_dir / name, scorer, meta);
        last_good = ckpt_dir / name;
      }
      if (rec.val_auc && (!history.best_val_auc || *rec.val_auc > *history.best_val_auc)) {
        history.best_val_auc = rec.val_auc;
        history.best_checkpoint = ckpt_dir / "best.ckpt";
        save_checkpoint(*history.best_checkpoint, scorer, meta);
      }
    } else if (rec.val_auc && (!history.best_val_auc || *rec.val_auc > *history.best_val_auc)) {
      history.best_val_auc = rec.val_auc;
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  if (!ckpt_dir.empty()) save_checkpoint(ckpt_dir / "last.ckpt", scorer, {{"history", to_json(history)}});
  return {std::move(scorer), std::move(history)};
}

}  // namespace patchmil
