#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tofu/common.hpp"
#include "tofu/nn/tensor.hpp"

namespace tofu::data {

using SampleId = std::int64_t;

// Labeled samples of a common shape, stored contiguously. Every sample
// carries a stable id that survives partitioning and subsetting.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(Shape sample_shape, std::size_t num_classes);
  LabeledDataset(Shape sample_shape, std::size_t num_classes, std::vector<Real> features, std::vector<int> labels,
                 std::vector<SampleId> ids);

  void push_back(std::span<const Real> input, int label, SampleId id);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  const Shape& sample_shape() const noexcept { return sample_shape_; }
  std::size_t sample_size() const noexcept { return sample_size_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  std::span<const Real> input(std::size_t i) const;
  int label(std::size_t i) const { return labels_.at(i); }
  SampleId id(std::size_t i) const { return ids_.at(i); }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<SampleId>& ids() const noexcept { return ids_; }
  const std::vector<Real>& features() const noexcept { return features_; }

  // A single sample as a tensor of sample_shape().
  nn::TensorBuf input_tensor(std::size_t i) const;

  // Samples at the given positions, in that order.
  LabeledDataset subset(std::span<const std::size_t> positions) const;
  nn::TensorBuf gather(std::span<const std::size_t> positions) const;
  std::vector<int> gather_labels(std::span<const std::size_t> positions) const;

  // Every sample stacked along a leading batch axis.
  nn::TensorBuf all_inputs() const;

  // Same samples viewed with a different per-sample shape.
  LabeledDataset reshaped(Shape sample_shape) const;

 private:
  Shape sample_shape_;
  std::size_t sample_size_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<Real> features_;
  std::vector<int> labels_;
  std::vector<SampleId> ids_;
};

// Concatenation in argument order. All parts must share shape and classes.
LabeledDataset concat(std::span<const LabeledDataset> parts);

// Shuffles with the seed and cuts consecutive pieces with the given
// fractions; the last piece takes the remainder.
std::vector<LabeledDataset> split(const LabeledDataset& ds, std::span<const Real> fractions, std::uint64_t seed);

// One epoch of minibatch positions: a seeded shuffle cut into batches of
// batch_size (the last may be smaller).
std::vector<std::vector<std::size_t>> batch_iter(const LabeledDataset& ds, std::size_t batch_size,
                                                 std::uint64_t epoch_seed);

}  // namespace tofu::data
