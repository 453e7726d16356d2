#pragma once

#include "tofu/nn/model.hpp"

namespace tofu::nn {

// theta - lr * g
ParamVector sgd_step(const ParamVector& params, const GradVector& grads, Real lr);

// SGD with optional heavy-ball momentum. momentum == 0 is bit-identical to
// repeated sgd_step.
class Sgd {
 public:
  explicit Sgd(Real lr, Real momentum = 0.0);

  void step(ParamVector& params, const GradVector& grads);
  Real lr() const noexcept { return lr_; }

 private:
  Real lr_;
  Real momentum_;
  std::vector<Real> velocity_;
};

}  // namespace tofu::nn
