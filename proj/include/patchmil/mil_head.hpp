#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "patchmil/tiling.hpp"

namespace patchmil {

enum class Label : std::uint8_t { negative = 0, positive = 1 };

/// Validates an integer label; throws InvalidArgument for anything but 0/1.
Label label_from_int(long long value);
inline int to_int(Label l) { return static_cast<int>(l); }

inline constexpr double kDefaultBceEpsilon = 1e-7;

struct MaxResult {
  double image_score = 0.0;
  std::size_t argmax = 0;
};

/// Exact maximum; ties go to the lowest index. Rejects empty input and
/// scores outside [0,1].
MaxResult aggregate_max(std::span<const double> patch_scores);

/// aggregate_max that also checks every score carries the same image tag.
/// The training loop routes every max through here.
MaxResult aggregate_max_tagged(std::span<const double> patch_scores, std::span<const std::int64_t> source_ids);

/// Per-patch scores laid out on a PatchGrid plus the image-level summary.
struct ScoreGrid {
  int rows = 0;
  int cols = 0;
  std::vector<double> scores;  // row-major
  double image_score = 0.0;
  GridCell argmax;

  double at(int row, int col) const { return scores[static_cast<std::size_t>(row) * cols + col]; }
};

ScoreGrid make_score_grid(std::vector<double> scores, const PatchGrid& grid);

/// -[y ln s + (1-y) ln(1-s)] with s clamped to [eps, 1-eps].
double bce_loss(double image_score, Label label, double epsilon = kDefaultBceEpsilon);

/// Closed-form gradient of bce_loss(aggregate_max(scores)) with respect to
/// each patch score: zero except at the argmax, where it is -1/s for a
/// positive label and 1/(1-s) for a negative one (s clamped).
std::vector<double> loss_gradient_wrt_patches(std::span<const double> patch_scores, Label label,
                                              double epsilon = kDefaultBceEpsilon);

enum class Aggregator { max, log_sum_exp, noisy_or };

/// Differentiable head used by the trainer: pooling node followed by a BCE
/// node, each with its own backward rule. `backward` chains them.
class MilObjective {
 public:
  explicit MilObjective(Aggregator kind = Aggregator::max, double epsilon = kDefaultBceEpsilon,
                        double lse_sharpness = 10.0);

  /// Returns the loss; keeps what backward needs.
  double forward(std::span<const double> patch_scores, Label label);
  double forward_tagged(std::span<const double> patch_scores, std::span<const std::int64_t> source_ids, Label label);

  /// dLoss/dScore for every patch of the last forward call.
  std::vector<double> backward() const;

  double image_score() const { return image_score_; }
  std::size_t argmax() const { return argmax_; }
  Aggregator kind() const { return kind_; }

 private:
  double pool(std::span<const double> scores);
  std::vector<double> pool_backward(double upstream) const;

  Aggregator kind_;
  double epsilon_;
  double sharpness_;
  std::vector<double> scores_;
  Label label_ = Label::negative;
  double image_score_ = 0.0;
  std::size_t argmax_ = 0;
};

}  // namespace patchmil
