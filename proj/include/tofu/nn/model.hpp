#pragma once

#include <string>
#include <variant>
#include <vector>

#include "tofu/common.hpp"
#include "tofu/nn/tensor.hpp"

namespace tofu::nn {

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  friend bool operator==(const Dense&, const Dense&) = default;
};

struct Conv2d {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

// Non-overlapping window average; trailing rows/columns that do not fill a
// window are dropped.
struct AvgPool {
  std::size_t window = 2;
  friend bool operator==(const AvgPool&, const AvgPool&) = default;
};

using Layer = std::variant<Dense, Conv2d, Relu, Flatten, AvgPool>;

std::string layer_name(const Layer& layer);

struct ModelSpec {
  std::vector<Layer> layers;
  Shape input_shape;  // per sample, no batch axis
  std::size_t num_classes = 0;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

class CompositionError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

// Per-layer output shapes (per sample). Throws CompositionError naming the
// first pair of layers whose shapes do not compose.
std::vector<Shape> infer_shapes(const ModelSpec& spec);
void validate(const ModelSpec& spec);

// Two-layer perceptron on a flattened input.
ModelSpec mlp_spec(const Shape& input_shape, std::size_t hidden, std::size_t num_classes);

// conv(C->8,3x3)-relu-avgpool-conv(8->16,3x3)-relu-avgpool-flatten-dense
ModelSpec small_cnn_spec(const Shape& input_shape, std::size_t num_classes);

struct ParamBlock {
  std::size_t layer = 0;
  std::string name;  // "weight" or "bias"
  std::size_t offset = 0;
  Shape shape;
  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

struct ParamLayout {
  std::vector<ParamBlock> blocks;
  std::size_t total = 0;
  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

ParamLayout make_layout(const ModelSpec& spec);

// Flat parameter vector with its layer layout.
struct ParamVector {
  ParamLayout layout;
  std::vector<Real> values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

// Gradient with the same layout as the parameters it was taken against.
struct GradVector {
  ParamLayout layout;
  std::vector<Real> values;

  static GradVector zeros_like(const ParamVector& params);
  std::size_t size() const noexcept { return values.size(); }
};

ParamVector zeros(const ModelSpec& spec);

// Fan-in scaled uniform weights (He bound sqrt(6 / fan_in)), zero biases.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

// Logits of shape (batch, num_classes).
TensorBuf forward(const ModelSpec& spec, const ParamVector& params, const TensorBuf& batch);

// Activations recorded during a forward pass; enough to run backward.
struct ForwardTrace {
  std::vector<TensorBuf> inputs;  // inputs[i] is the input of layer i
  TensorBuf output;
};

ForwardTrace forward_trace(const ModelSpec& spec, const ParamVector& params, const TensorBuf& batch);

// Accumulates d(scalar)/d(params) into grad given d(scalar)/d(logits).
void backward(const ModelSpec& spec, const ParamVector& params, const ForwardTrace& trace,
              const TensorBuf& grad_logits, GradVector& grad);

// Input of the final dense layer: the representation used for feature
// statistics such as Mahalanobis distances.
TensorBuf penultimate_features(const ModelSpec& spec, const ParamVector& params, const TensorBuf& batch);

}  // namespace tofu::nn
