#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "patchmil/error.hpp"
#include "patchmil/layers.hpp"

namespace patchmil {

struct SgdHyperparams {
  double learning_rate = 1e-5;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 0.0;
};

/// One SGD step, in place. With weight decay the gradient is first replaced
/// by g + wd * p. Then
///   v' = mu * v - lr * g
///   p' = p + mu * v' - lr * g     (Nesterov)
///   p' = p + v'                   (classical momentum)
/// Rejects mismatched lengths and non-finite inputs before touching anything.
template <class T>
void sgd_nesterov_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, const SgdHyperparams& hp) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw InvalidArgument("sgd step: params/grads/velocity sizes differ (" + std::to_string(params.size()) + "/" +
                          std::to_string(grads.size()) + "/" + std::to_string(velocity.size()) + ")");
  if (!std::isfinite(hp.learning_rate) || !std::isfinite(hp.momentum) || !std::isfinite(hp.weight_decay))
    throw InvalidArgument("sgd step: non-finite hyperparameter");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!std::isfinite(params[i]) || !std::isfinite(grads[i]) || !std::isfinite(velocity[i]))
      throw InvalidArgument("sgd step: non-finite value at element " + std::to_string(i));
  const T mu = static_cast<T>(hp.momentum);
  const T lr = static_cast<T>(hp.learning_rate);
  const T wd = static_cast<T>(hp.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i] + wd * params[i];
    const T v = mu * velocity[i] - lr * g;
    velocity[i] = v;
    params[i] = hp.nesterov ? params[i] + mu * v - lr * g : params[i] + v;
  }
}

/// Learning rate after `step` updates under inverse-time decay:
/// lr0 / (1 + decay * step).
double decayed_learning_rate(double base, double decay, std::uint64_t step);

/// Momentum SGD over a fixed set of network parameters; owns the velocity
/// buffers and the step counter that drives learning-rate decay.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<nn::Parameter*> params, SgdHyperparams hp, double lr_decay = 0.0);

  /// Applies one update from the accumulated gradients, then zeroes them.
  void step();

  std::uint64_t steps() const { return steps_; }
  double current_learning_rate() const;

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<std::vector<float>> velocity_;
  SgdHyperparams hp_;
  double lr_decay_;
  std::uint64_t steps_ = 0;
};

}  // namespace patchmil
