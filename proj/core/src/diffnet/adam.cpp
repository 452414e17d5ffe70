#include "fprior/diffnet/adam.hpp"

#include <cmath>
#include <string>

namespace fprior::diffnet {

AdamState make_adam_state(const AdamConfig& config, std::span<const Var> params) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.push_back(Matrix::Zero(p.rows(), p.cols()));
    s.v.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return s;
}

void adam_step(AdamState& state, std::span<Var> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols()) {
      throw ShapeError("adam_step: gradient shape mismatch for parameter " + std::to_string(i));
    }
    if (!grads[i].allFinite()) {
      throw NonFiniteGradient("adam_step: non-finite gradient for parameter " + std::to_string(i) + " at step " +
                              std::to_string(state.step + 1));
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i].cwiseAbs2();
    Matrix& p = params[i].mutable_value();
    p.array() -= c.lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + c.eps);
  }
}

}  // namespace fprior::diffnet
