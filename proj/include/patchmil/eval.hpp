#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchmil/annotation.hpp"
#include "patchmil/data.hpp"
#include "patchmil/mil_head.hpp"
#include "patchmil/model.hpp"
#include "patchmil/tiling.hpp"

namespace patchmil {

/// Raised when AUC is requested for input with a single class.
class UndefinedAuc : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Mann-Whitney AUC: (concordant + tied/2) / (n_pos * n_neg), computed from
/// mid-ranks in O(n log n). Labels must be 0/1.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Hit when the argmax patch's rectangle touches the annotation: any nonzero
/// mask pixel inside it, or any box overlapping it. Rejects an empty
/// annotation.
bool pointing_game(const ScoreGrid& scores, const PatchGrid& grid, const Annotation& annotation);

struct ThresholdMetric {
  double threshold = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

std::vector<ThresholdMetric> threshold_metrics(std::span<const double> scores, std::span<const int> labels,
                                               std::span<const double> thresholds);

struct GridConfig {
  int image_size = 256;
  int patch_size = 64;
  int stride = 32;
  bool edge_snap = false;
};

nlohmann::json to_json(const GridConfig& g);

struct ImageResult {
  std::string image_path;
  Label label = Label::negative;
  ScoreGrid scores;
  std::optional<bool> pointing_hit;
};

struct EvalReport {
  std::optional<double> auc;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::optional<double> pointing_game_accuracy;
  std::size_t pointing_game_count = 0;
  std::vector<ThresholdMetric> thresholds;
  nlohmann::json config;
  std::vector<ImageResult> images;
};

nlohmann::json to_json(const EvalReport& r);

/// Loads, standardizes and tiles one image, then scores it.
ScoreGrid score_image(const PatchScorer& scorer, const Image& raw, const GridConfig& grid_config);

/// Scores every record, computes AUC over the set (left empty when one
/// class is missing) and pointing-game accuracy over annotated positives.
EvalReport evaluate(const PatchScorer& scorer, const Manifest& manifest, std::span<const ImageRecord> records,
                    const GridConfig& grid_config);

/// Per-image CSV: image_path,label,image_score,argmax_row,argmax_col.
void write_scores_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace patchmil
