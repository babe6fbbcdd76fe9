#include "patchmil/mil_head.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchmil/error.hpp"

namespace patchmil {

Label label_from_int(long long value) {
  if (value != 0 && value != 1) throw InvalidArgument("label must be 0 or 1, got " + std::to_string(value));
  return static_cast<Label>(value);
}

MaxResult aggregate_max(std::span<const double> patch_scores) {
  if (patch_scores.empty()) throw InvalidArgument("cannot aggregate an empty patch list");
  MaxResult r{patch_scores[0], 0};
  for (std::size_t i = 0; i < patch_scores.size(); ++i) {
    const double s = patch_scores[i];
    if (!(s >= 0.0 && s <= 1.0))
      throw InvalidArgument("patch score " + std::to_string(i) + " outside [0,1]: " + std::to_string(s));
    if (s > r.image_score) r = {s, i};
  }
  return r;
}

MaxResult aggregate_max_tagged(std::span<const double> patch_scores, std::span<const std::int64_t> source_ids) {
  if (source_ids.size() != patch_scores.size())
    throw InvalidArgument("score/tag length mismatch in aggregation");
  for (std::size_t i = 1; i < source_ids.size(); ++i)
    if (source_ids[i] != source_ids[0])
      throw InvalidArgument("max aggregation would mix patches of images " + std::to_string(source_ids[0]) +
                            " and " + std::to_string(source_ids[i]));
  return aggregate_max(patch_scores);
}

ScoreGrid make_score_grid(std::vector<double> scores, const PatchGrid& grid) {
  if (scores.size() != grid.patch_count())
    throw InvalidArgument("score count " + std::to_string(scores.size()) + " does not match grid patch count " +
                          std::to_string(grid.patch_count()));
  const MaxResult m = aggregate_max(scores);
  ScoreGrid sg;
  sg.rows = grid.rows();
  sg.cols = grid.cols();
  sg.scores = std::move(scores);
  sg.image_score = m.image_score;
  sg.argmax = grid.cell_of(m.argmax);
  return sg;
}

namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw InvalidArgument("BCE epsilon must lie in (0, 0.5)");
}

}  // namespace

double bce_loss(double image_score, Label label, double epsilon) {
  check_epsilon(epsilon);
  if (!(image_score >= 0.0 && image_score <= 1.0))
    throw InvalidArgument("image score outside [0,1]: " + std::to_string(image_score));
  const double s = std::clamp(image_score, epsilon, 1.0 - epsilon);
  return label == Label::positive ? -std::log(s) : -std::log1p(-s);
}

std::vector<double> loss_gradient_wrt_patches(std::span<const double> patch_scores, Label label, double epsilon) {
  check_epsilon(epsilon);
  const MaxResult m = aggregate_max(patch_scores);
  std::vector<double> grad(patch_scores.size(), 0.0);
  const double s = std::clamp(m.image_score, epsilon, 1.0 - epsilon);
  grad[m.argmax] = label == Label::positive ? -1.0 / s : 1.0 / (1.0 - s);
  return grad;
}

MilObjective::MilObjective(Aggregator kind, double epsilon, double lse_sharpness)
    : kind_(kind), epsilon_(epsilon), sharpness_(lse_sharpness) {
  check_epsilon(epsilon);
  if (!(lse_sharpness > 0.0)) throw InvalidArgument("log-sum-exp sharpness must be positive");
}

double MilObjective::pool(std::span<const double> scores) {
  const MaxResult m = aggregate_max(scores);
  argmax_ = m.argmax;
  switch (kind_) {
    case Aggregator::max:
      return m.image_score;
    case Aggregator::log_sum_exp: {
      // (1/r) log(mean exp(r s)), shifted by the max for stability.
      double acc = 0.0;
      for (double s : scores) acc += std::exp(sharpness_ * (s - m.image_score));
      const double v = m.image_score + std::log(acc / static_cast<double>(scores.size())) / sharpness_;
      return std::clamp(v, 0.0, 1.0);
    }
    case Aggregator::noisy_or: {
      double none = 1.0;
      for (double s : scores) none *= 1.0 - s;
      return 1.0 - none;
    }
  }
  return m.image_score;
}

std::vector<double> MilObjective::pool_backward(double upstream) const {
  std::vector<double> g(scores_.size(), 0.0);
  switch (kind_) {
    case Aggregator::max:
      g[argmax_] = upstream;
      break;
    case Aggregator::log_sum_exp: {
      const double top = scores_[argmax_];
      double z = 0.0;
      for (double s : scores_) z += std::exp(sharpness_ * (s - top));
      for (std::size_t i = 0; i < scores_.size(); ++i) g[i] = upstream * std::exp(sharpness_ * (scores_[i] - top)) / z;
      break;
    }
    case Aggregator::noisy_or:
      for (std::size_t i = 0; i < scores_.size(); ++i) {
        double others = 1.0;
        for (std::size_t j = 0; j < scores_.size(); ++j)
          if (j != i) others *= 1.0 - scores_[j];
        g[i] = upstream * others;
      }
      break;
  }
  return g;
}

double MilObjective::forward(std::span<const double> patch_scores, Label label) {
  scores_.assign(patch_scores.begin(), patch_scores.end());
  label_ = label;
  image_score_ = pool(scores_);
  return bce_loss(image_score_, label_, epsilon_);
}

double MilObjective::forward_tagged(std::span<const double> patch_scores, std::span<const std::int64_t> source_ids,
                                    Label label) {
  aggregate_max_tagged(patch_scores, source_ids);
  return forward(patch_scores, label);
}

std::vector<double> MilObjective::backward() const {
  if (scores_.empty()) throw InvalidArgument("backward called before forward");
  // BCE node: dL/ds = (s - y) / (s (1 - s)) on the clamped score.
  const double s = std::clamp(image_score_, epsilon_, 1.0 - epsilon_);
  const double y = label_ == Label::positive ? 1.0 : 0.0;
  const double upstream = (s - y) / (s * (1.0 - s));
  return pool_backward(upstream);
}

}  // namespace patchmil
