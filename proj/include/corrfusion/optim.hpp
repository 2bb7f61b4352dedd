#pragma once

#include <span>
#include <string>

#include "corrfusion/model.hpp"

namespace corrfusion {

struct SgdSettings {
  double lr = 0.001;
  double momentum = 0.9;
  double l2_weight = 1e-4;
};

// Accumulator-form momentum SGD on one tensor:
//   g' = g + l2·θ,  v ← momentum·v + g',  θ ← θ - lr·v
// Pass l2 = 0 for tensors that are not decayed.
inline void sgd_momentum_step(std::span<double> param, std::span<const double> grad,
                              std::span<double> velocity, double lr, double momentum,
                              double l2) {
  if (param.size() != grad.size() || param.size() != velocity.size())
    throw ShapeError("sgd_momentum_step: param/grad/velocity lengths " +
                     std::to_string(param.size()) + "/" + std::to_string(grad.size()) + "/" +
                     std::to_string(velocity.size()));
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + l2 * param[i];
    param[i] -= lr * velocity[i];
  }
}

class MomentumSgd {
 public:
  MomentumSgd(const Network& net, SgdSettings settings)
      : settings_(settings), velocity_(zeros_like(net)) {}

  void step(Network& net, Network& grads) {
    auto params = parameter_list(net);
    auto g = parameter_list(grads);
    auto v = parameter_list(velocity_);
    if (params.size() != g.size() || params.size() != v.size())
      throw ShapeError("MomentumSgd: gradient layout does not match the network");
    for (std::size_t i = 0; i < params.size(); ++i)
      sgd_momentum_step(params[i].values, g[i].values, v[i].values, settings_.lr,
                        settings_.momentum, params[i].decay ? settings_.l2_weight : 0.0);
  }

  const SgdSettings& settings() const noexcept { return settings_; }

 private:
  SgdSettings settings_;
  Network velocity_;
};

}  // namespace corrfusion
