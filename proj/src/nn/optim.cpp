#include "tofu/nn/optim.hpp"

namespace tofu::nn {

namespace {

void check_step(const ParamVector& params, const GradVector& grads, Real lr) {
  if (params.layout != grads.layout || params.values.size() != grads.values.size())
    throw ShapeError("sgd: gradient layout does not match parameter layout");
  if (!(lr > 0.0)) throw ArgumentError("sgd: learning rate must be positive");
}

}  // namespace

ParamVector sgd_step(const ParamVector& params, const GradVector& grads, Real lr) {
  check_step(params, grads, lr);
  ParamVector out = params;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= lr * grads.values[i];
  return out;
}

Sgd::Sgd(Real lr, Real momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr > 0.0)) throw ArgumentError("sgd: learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("sgd: momentum must lie in [0, 1)");
}

void Sgd::step(ParamVector& params, const GradVector& grads) {
  check_step(params, grads, lr_);
  if (momentum_ == 0.0) {
    for (std::size_t i = 0; i < params.values.size(); ++i) params.values[i] -= lr_ * grads.values[i];
    return;
  }
  if (velocity_.size() != params.values.size()) velocity_.assign(params.values.size(), 0.0);
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    velocity_[i] = momentum_ * velocity_[i] + grads.values[i];
    params.values[i] -= lr_ * velocity_[i];
  }
}

}  // namespace tofu::nn
