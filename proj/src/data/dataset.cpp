#include "tofu/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace tofu::data {

LabeledDataset::LabeledDataset(Shape sample_shape, std::size_t num_classes)
    : sample_shape_(std::move(sample_shape)), sample_size_(shape_product(sample_shape_)), num_classes_(num_classes) {
  if (num_classes_ == 0) throw ArgumentError("dataset needs at least one class");
  if (sample_shape_.empty() || sample_size_ == 0) throw ArgumentError("dataset sample shape is empty");
}

LabeledDataset::LabeledDataset(Shape sample_shape, std::size_t num_classes, std::vector<Real> features,
                               std::vector<int> labels, std::vector<SampleId> ids)
    : LabeledDataset(std::move(sample_shape), num_classes) {
  if (labels.size() != ids.size() || features.size() != labels.size() * sample_size_)
    throw ShapeError("dataset: " + std::to_string(features.size()) + " feature values, " +
                     std::to_string(labels.size()) + " labels and " + std::to_string(ids.size()) +
                     " ids are inconsistent with sample size " + std::to_string(sample_size_));
  std::unordered_set<SampleId> seen;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes_)
      throw ArgumentError("dataset: label " + std::to_string(labels[i]) + " out of range");
    if (!seen.insert(ids[i]).second) throw ArgumentError("dataset: duplicate sample id " + std::to_string(ids[i]));
  }
  features_ = std::move(features);
  labels_ = std::move(labels);
  ids_ = std::move(ids);
}

void LabeledDataset::push_back(std::span<const Real> input, int label, SampleId id) {
  if (input.size() != sample_size_)
    throw ShapeError("dataset: sample of " + std::to_string(input.size()) + " values, expected " +
                     std::to_string(sample_size_));
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_)
    throw ArgumentError("dataset: label " + std::to_string(label) + " out of range");
  if (std::find(ids_.begin(), ids_.end(), id) != ids_.end())
    throw ArgumentError("dataset: duplicate sample id " + std::to_string(id));
  features_.insert(features_.end(), input.begin(), input.end());
  labels_.push_back(label);
  ids_.push_back(id);
}

std::span<const Real> LabeledDataset::input(std::size_t i) const {
  if (i >= size()) throw ArgumentError("dataset: index out of range");
  return std::span<const Real>(features_).subspan(i * sample_size_, sample_size_);
}

nn::TensorBuf LabeledDataset::input_tensor(std::size_t i) const {
  auto x = input(i);
  return nn::TensorBuf(sample_shape_, std::vector<Real>(x.begin(), x.end()));
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> positions) const {
  LabeledDataset out(sample_shape_, num_classes_);
  out.features_.reserve(positions.size() * sample_size_);
  for (auto p : positions) {
    auto x = input(p);
    out.features_.insert(out.features_.end(), x.begin(), x.end());
    out.labels_.push_back(labels_[p]);
    out.ids_.push_back(ids_[p]);
  }
  return out;
}

nn::TensorBuf LabeledDataset::gather(std::span<const std::size_t> positions) const {
  Shape shape{positions.size()};
  shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
  std::vector<Real> values;
  values.reserve(positions.size() * sample_size_);
  for (auto p : positions) {
    auto x = input(p);
    values.insert(values.end(), x.begin(), x.end());
  }
  return nn::TensorBuf(std::move(shape), std::move(values));
}

std::vector<int> LabeledDataset::gather_labels(std::span<const std::size_t> positions) const {
  std::vector<int> out;
  out.reserve(positions.size());
  for (auto p : positions) out.push_back(labels_.at(p));
  return out;
}

nn::TensorBuf LabeledDataset::all_inputs() const {
  Shape shape{size()};
  shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
  return nn::TensorBuf(std::move(shape), features_);
}

LabeledDataset LabeledDataset::reshaped(Shape sample_shape) const {
  if (shape_product(sample_shape) != sample_size_)
    throw ShapeError("cannot view samples of " + shape_to_string(sample_shape_) + " as " +
                     shape_to_string(sample_shape));
  LabeledDataset out = *this;
  out.sample_shape_ = std::move(sample_shape);
  return out;
}

LabeledDataset concat(std::span<const LabeledDataset> parts) {
  if (parts.empty()) throw ArgumentError("concat: no datasets");
  std::vector<Real> features;
  std::vector<int> labels;
  std::vector<SampleId> ids;
  for (const auto& p : parts) {
    if (p.sample_shape() != parts[0].sample_shape() || p.num_classes() != parts[0].num_classes())
      throw ShapeError("concat: datasets disagree on sample shape or class count");
    features.insert(features.end(), p.features().begin(), p.features().end());
    labels.insert(labels.end(), p.labels().begin(), p.labels().end());
    ids.insert(ids.end(), p.ids().begin(), p.ids().end());
  }
  return LabeledDataset(parts[0].sample_shape(), parts[0].num_classes(), std::move(features), std::move(labels),
                        std::move(ids));
}

std::vector<LabeledDataset> split(const LabeledDataset& ds, std::span<const Real> fractions, std::uint64_t seed) {
  Real sum = 0.0;
  for (auto f : fractions) {
    if (f < 0.0) throw ArgumentError("split: negative fraction");
    sum += f;
  }
  if (sum > 1.0 + 1e-12) throw ArgumentError("split: fractions sum above 1");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_stream(seed, {name_tag("split")});
  shuffle(order, rng);
  std::vector<LabeledDataset> out;
  std::size_t start = 0;
  for (auto f : fractions) {
    const auto n = std::min(ds.size() - start, static_cast<std::size_t>(std::floor(f * static_cast<Real>(ds.size()) + 0.5)));
    std::vector<std::size_t> part(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(start + n));
    std::sort(part.begin(), part.end());
    out.push_back(ds.subset(part));
    start += n;
  }
  std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(start), order.end());
  std::sort(rest.begin(), rest.end());
  out.push_back(ds.subset(rest));
  return out;
}

std::vector<std::vector<std::size_t>> batch_iter(const LabeledDataset& ds, std::size_t batch_size,
                                                 std::uint64_t epoch_seed) {
  if (batch_size == 0) throw ArgumentError("batch size must be at least 1");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(epoch_seed);
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace tofu::data
