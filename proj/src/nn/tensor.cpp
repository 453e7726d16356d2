#include "tofu/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace tofu::nn {

TensorBuf::TensorBuf(Shape shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

TensorBuf::TensorBuf(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("TensorBuf: shape " + shape_to_string(shape_) + " holds " +
                     std::to_string(shape_product(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

std::size_t TensorBuf::row_size() const {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return data_.size() / shape_[0];
}

std::span<const Real> TensorBuf::row(std::size_t i) const {
  const auto n = row_size();
  return std::span<const Real>(data_).subspan(i * n, n);
}

std::span<Real> TensorBuf::row(std::size_t i) {
  const auto n = row_size();
  return std::span<Real>(data_).subspan(i * n, n);
}

bool TensorBuf::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

}  // namespace tofu::nn
