#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fprior/diffnet/autodiff.hpp"

namespace fprior::diffnet {

/// Defaults follow common WGAN-GP practice.
struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

AdamState make_adam_state(const AdamConfig& config, std::span<const Var> params);

/// One bias-corrected Adam update of the leaf parameters in place.
/// Throws NonFiniteGradient (leaving params and state untouched) on NaN/inf.
void adam_step(AdamState& state, std::span<Var> params, std::span<const Matrix> grads);

class Adam {
 public:
  Adam(const AdamConfig& config, std::vector<Var> params)
      : params_(std::move(params)), state_(make_adam_state(config, params_)) {}

  void step(std::span<const Matrix> grads) { adam_step(state_, params_, grads); }
  const AdamState& state() const { return state_; }
  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  AdamState state_;
};

}  // namespace fprior::diffnet
