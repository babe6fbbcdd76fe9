#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchmil/layers.hpp"
#include "patchmil/tiling.hpp"

namespace patchmil {

enum class BackboneId { pretrained_vgg16_style, reference_small_cnn };

std::string to_string(BackboneId id);
BackboneId backbone_from_string(const std::string& name);

struct ScorerSpec {
  BackboneId backbone = BackboneId::reference_small_cnn;
  int input_size = 64;
  int frozen_layer_count = 0;
  std::uint64_t seed = 0;
  /// Channel widths of the four conv stages of the reference CNN.
  std::vector<int> reference_widths{16, 32, 32, 32};
  /// Checkpoint holding pretrained backbone weights (pretrained path only).
  std::filesystem::path weights_path;
};

nlohmann::json to_json(const ScorerSpec& spec);
ScorerSpec scorer_spec_from_json(const nlohmann::json& j);

/// Weight-bearing layer summary, in backbone order.
struct LayerInfo {
  std::string kind;
  std::size_t parameter_count = 0;
  bool trainable = true;
};

/// Per-patch probability model: an input adapter (channel replication and
/// backbone normalization), a CNN producing one logit, and a sigmoid.
class PatchScorer;
PatchScorer build_scorer(const ScorerSpec& spec);

class PatchScorer {
 public:
  /// Fresh network with seeded random weights. Used for the reference CNN
  /// and by tooling that converts external weights; build_scorer never falls
  /// back to this on the pretrained path.
  static PatchScorer randomly_initialized(const ScorerSpec& spec);

  const ScorerSpec& spec() const { return spec_; }
  int input_channels() const { return input_channels_; }

  /// Scores every patch; order preserved, each score strictly inside (0,1).
  /// Patches are distributed over worker threads (see worker_count()).
  std::vector<double> score_patches(std::span<const Patch> patches) const;
  double score(const Image& patch) const;

  /// Forward + backward for one patch. `dloss_dscore` is the upstream
  /// gradient on the probability; parameter gradients of trainable layers
  /// accumulate. Returns the score.
  double accumulate_gradient(const Image& patch, double dloss_dscore);

  void zero_grad() { net_.zero_grad(); }

  std::vector<LayerInfo> weight_layers() const;
  /// FNV-1a checksum of each weight-bearing layer's parameter bytes.
  std::vector<std::uint64_t> layer_checksums() const;

  /// Trainable parameter tensors (values and grads), for the optimizer.
  std::vector<nn::Parameter*> trainable_parameters();
  std::vector<const nn::Parameter*> all_parameters() const;
  std::vector<nn::Parameter*> all_parameters();

  void set_frozen_layer_count(int count);

 private:
  friend PatchScorer build_scorer(const ScorerSpec& spec);

  PatchScorer() = default;
  nn::Tensor adapt(const Image& patch, std::size_t index) const;

  ScorerSpec spec_;
  int input_channels_ = 1;
  std::vector<float> channel_mean_;
  std::vector<float> channel_std_;
  // Subtract the per-patch mean instead of a fixed channel mean (removes slow intensity drift).
  bool center_patches_ = false;
  nn::Network net_;
};

/// Builds a scorer per spec. The reference CNN is seed-initialized; the
/// pretrained path loads spec.weights_path and throws IoError when the
/// weights are absent or do not fit the architecture.
PatchScorer build_scorer(const ScorerSpec& spec);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  PatchScorer scorer;
  nlohmann::json metadata;
};

/// Writes spec, parameters and free-form metadata (e.g. training history)
/// to a versioned binary container. The write goes to a temporary file that
/// is renamed into place.
void save_checkpoint(const std::filesystem::path& path, const PatchScorer& scorer,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Worker threads used for scoring: PATCHMIL_WORKERS if set, otherwise the
/// hardware concurrency.
unsigned worker_count();

}  // namespace patchmil
