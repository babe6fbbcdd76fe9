#include "patchmil/optim.hpp"

#include <algorithm>

namespace patchmil {

double decayed_learning_rate(double base, double decay, std::uint64_t step) {
  return base / (1.0 + decay * static_cast<double>(step));
}

SgdOptimizer::SgdOptimizer(std::vector<nn::Parameter*> params, SgdHyperparams hp, double lr_decay)
    : params_(std::move(params)), hp_(hp), lr_decay_(lr_decay) {
  if (!(hp_.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  if (!(hp_.momentum >= 0.0 && hp_.momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (!(lr_decay_ >= 0.0)) throw InvalidArgument("learning-rate decay must be >= 0");
  velocity_.reserve(params_.size());
  for (const nn::Parameter* p : params_) velocity_.emplace_back(p->value.size(), 0.0f);
}

double SgdOptimizer::current_learning_rate() const { return decayed_learning_rate(hp_.learning_rate, lr_decay_, steps_); }

void SgdOptimizer::step() {
  SgdHyperparams hp = hp_;
  hp.learning_rate = current_learning_rate();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Parameter& p = *params_[i];
    sgd_nesterov_step<float>(p.value, std::span<const float>(p.grad), velocity_[i], hp);
    std::fill(p.grad.begin(), p.grad.end(), 0.0f);
  }
  ++steps_;
}

}  // namespace patchmil
