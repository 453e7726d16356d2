#pragma once

#include <span>
#include <vector>

#include "tofu/common.hpp"

namespace tofu::nn {

// Dense row-major tensor. The product of the shape always equals the
// number of stored values.
class TensorBuf {
 public:
  TensorBuf() = default;
  explicit TensorBuf(Shape shape);
  TensorBuf(Shape shape, std::vector<Real> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const Real> data() const noexcept { return data_; }
  std::span<Real> data() noexcept { return data_; }
  const std::vector<Real>& values() const noexcept { return data_; }

  Real operator[](std::size_t i) const { return data_[i]; }
  Real& operator[](std::size_t i) { return data_[i]; }

  // Row i of a tensor whose leading axis is the batch axis.
  std::span<const Real> row(std::size_t i) const;
  std::span<Real> row(std::size_t i);
  std::size_t row_size() const;

  bool all_finite() const;

  friend bool operator==(const TensorBuf&, const TensorBuf&) = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

using LossVector = std::vector<Real>;

}  // namespace tofu::nn
