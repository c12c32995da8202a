#pragma once

#include <cstddef>
#include <vector>

#include "bilevel/nn/param_vector.hpp"

namespace bilevel::opt {

/// Classical (heavy-ball) momentum buffer.
struct MomentumState {
  MomentumState() = default;
  MomentumState(std::size_t dimension, double coefficient);

  std::vector<double> velocity;
  double coefficient = 0.9;  // in [0, 1)
};

/// velocity <- m * velocity + update; params <- params - learning_rate * velocity.
/// Throws NumericError naming `step` when the update or result is non-finite.
void momentum_step(nn::ParamVector& params, const nn::ParamVector& update, MomentumState& state,
                   double learning_rate, std::size_t step);

/// Plain SGD with momentum on a single mini-batch gradient; same recurrence.
void sgd_baseline_step(nn::ParamVector& params, const nn::ParamVector& grad, MomentumState& state,
                       double learning_rate, std::size_t step);

/// initial * decay^epoch.
double decayed_learning_rate(double initial, double decay, std::size_t epoch);

}  // namespace bilevel::opt
