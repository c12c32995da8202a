#include "bilevel/opt/momentum.hpp"

#include <cmath>
#include <string>

#include "bilevel/error.hpp"

namespace bilevel::opt {

MomentumState::MomentumState(std::size_t dimension, double coefficient)
    : velocity(dimension, 0.0), coefficient(coefficient) {
  if (!(coefficient >= 0.0 && coefficient < 1.0)) {
    throw ConfigError("momentum coefficient must lie in [0, 1), got " +
                      std::to_string(coefficient));
  }
}

void momentum_step(nn::ParamVector& params, const nn::ParamVector& update, MomentumState& state,
                   double learning_rate, std::size_t step) {
  if (!(learning_rate > 0.0)) {
    throw ConfigError("learning rate must be positive, got " + std::to_string(learning_rate));
  }
  if (update.size() != params.size() || state.velocity.size() != params.size()) {
    throw InternalError("momentum step: parameter, update and velocity lengths differ");
  }
  if (!update.all_finite()) {
    throw NumericError("non-finite update at step " + std::to_string(step));
  }
  auto theta = params.values();
  auto g = update.values();
  const double m = state.coefficient;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.velocity[i] = m * state.velocity[i] + g[i];
    theta[i] -= learning_rate * state.velocity[i];
  }
  if (!params.all_finite()) {
    throw NumericError("non-finite parameters after step " + std::to_string(step));
  }
}

void sgd_baseline_step(nn::ParamVector& params, const nn::ParamVector& grad, MomentumState& state,
                       double learning_rate, std::size_t step) {
  momentum_step(params, grad, state, learning_rate, step);
}

double decayed_learning_rate(double initial, double decay, std::size_t epoch) {
  return initial * std::pow(decay, static_cast<double>(epoch));
}

}  // namespace bilevel::opt
