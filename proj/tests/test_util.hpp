#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tofu/common.hpp"
#include "tofu/nn/model.hpp"
#include "tofu/nn/tensor.hpp"

namespace tofu::testing {

inline nn::TensorBuf random_tensor(const Shape& shape, RngStream& rng, Real lo = -1.0, Real hi = 1.0) {
  std::vector<Real> v(shape_product(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return nn::TensorBuf(shape, std::move(v));
}

// Central finite difference of f at coordinate i of params.
inline Real central_difference(const std::function<Real(const nn::ParamVector&)>& f, nn::ParamVector params,
                               std::size_t i, Real h) {
  const Real x0 = params.values[i];
  params.values[i] = x0 + h;
  const Real up = f(params);
  params.values[i] = x0 - h;
  const Real down = f(params);
  return (up - down) / (2.0 * h);
}

inline Real relative_error(Real a, Real b, Real floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace tofu::testing
