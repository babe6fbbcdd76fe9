#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "patchmil/augment.hpp"
#include "patchmil/data.hpp"
#include "patchmil/eval.hpp"
#include "patchmil/mil_head.hpp"
#include "patchmil/model.hpp"

namespace patchmil {

struct TrainConfig {
  double learning_rate = 1e-5;
  double momentum = 0.9;
  bool nesterov = true;
  /// Inverse-time learning-rate decay per optimizer step:
  /// lr_t = lr / (1 + decay * t).
  double decay = 1e-6;
  /// Separate L2 weight decay added to the gradient (off by default).
  double weight_decay = 0.0;
  int epochs = 250;
  GridConfig grid{1024, 224, 112, false};
  AugmentConfig augment;
  std::uint64_t seed = 0;
  int checkpoint_every = 10;
  /// Where checkpoints and history.jsonl go; empty disables file output.
  std::filesystem::path output_dir;
  /// Hold an AnnotationPoison guard for the whole run.
  bool poison_annotations = true;
  Aggregator aggregator = Aggregator::max;
  double bce_epsilon = kDefaultBceEpsilon;
  /// Score the val split after every epoch (history gets val AUC).
  bool validate_each_epoch = true;

  void validate() const;

  /// Reduced sizes for CPU runs with the reference CNN: 256 px images,
  /// 64 px patches at stride 32, 50 epochs, lr 1e-3.
  static TrainConfig desk_scale();
};

nlohmann::json to_json(const TrainConfig& c);
/// Overlays keys present in `j` onto `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> val_auc;
  double wall_seconds = 0.0;
  std::size_t steps = 0;
  double learning_rate = 0.0;  // at the end of the epoch
};

nlohmann::json to_json(const EpochRecord& e);

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  nlohmann::json config;
  nlohmann::json seeds;
  std::string decay_interpretation;
  std::optional<std::filesystem::path> best_checkpoint;
  std::optional<double> best_val_auc;

  std::vector<double> losses() const;
};

nlohmann::json to_json(const TrainHistory& h);

/// What one optimization step consumed; handed to TrainHooks::on_step.
struct StepInfo {
  int epoch = 0;
  std::size_t step = 0;
  std::size_t record_index = 0;
  std::vector<std::int64_t> source_ids;  // tag of every patch in the batch
  double loss = 0.0;
  double image_score = 0.0;
  std::size_t argmax = 0;
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Raised when the loss or a score turns non-finite. Checkpoints written
/// before the failure are left untouched.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct TrainResult {
  PatchScorer scorer;
  TrainHistory history;
};

/// MIL training: each step augments one training image, tiles it, scores
/// every patch, applies BCE to the max patch score and updates the scorer
/// with momentum SGD. Image order is reshuffled every epoch from the seed.
TrainResult train(const TrainConfig& config, const Manifest& manifest, PatchScorer scorer, const TrainHooks& hooks = {});

}  // namespace patchmil
