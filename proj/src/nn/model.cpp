#include "tofu/nn/model.hpp"

#include <cmath>
#include <sstream>

namespace tofu::nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string describe_input(const ModelSpec& spec, std::size_t i) {
  if (i == 0) return "input " + shape_to_string(spec.input_shape);
  return "layer " + std::to_string(i - 1) + " (" + layer_name(spec.layers[i - 1]) + ")";
}

[[noreturn]] void composition_failure(const ModelSpec& spec, std::size_t i, const Shape& got,
                                      const std::string& expected) {
  throw CompositionError(describe_input(spec, i) + " -> layer " + std::to_string(i) + " (" +
                         layer_name(spec.layers[i]) + "): incoming shape " + shape_to_string(got) +
                         ", expected " + expected);
}

std::size_t conv_out(std::size_t in, const Conv2d& c) {
  return (in + 2 * c.padding - c.kernel) / c.stride + 1;
}

// Per-layer block offsets; unused for parameter-free layers.
struct LayerOffsets {
  std::size_t weight = 0;
  std::size_t bias = 0;
};

std::vector<LayerOffsets> layer_offsets(const ModelSpec& spec, const ParamLayout& layout) {
  std::vector<LayerOffsets> out(spec.layers.size());
  for (const auto& b : layout.blocks) {
    if (b.name == "weight")
      out[b.layer].weight = b.offset;
    else
      out[b.layer].bias = b.offset;
  }
  return out;
}

void check_params(const ModelSpec& spec, const ParamVector& params) {
  if (params.values.size() != params.layout.total) {
    throw ShapeError("parameter vector length " + std::to_string(params.values.size()) +
                     " does not match layout total " + std::to_string(params.layout.total));
  }
  if (params.layout != make_layout(spec)) {
    throw ShapeError("parameter layout is not consistent with the model spec");
  }
}

TensorBuf apply_layer(const Layer& layer, const LayerOffsets& off, const std::vector<Real>& p,
                      const TensorBuf& x) {
  const std::size_t n = x.dim(0);
  return std::visit(
      Overloaded{
          [&](const Dense& d) {
            TensorBuf y(Shape{n, d.out});
            const Real* w = p.data() + off.weight;
            const Real* b = p.data() + off.bias;
            for (std::size_t s = 0; s < n; ++s) {
              auto xin = x.row(s);
              auto yout = y.row(s);
              for (std::size_t o = 0; o < d.out; ++o) {
                Real acc = b[o];
                const Real* wrow = w + o * d.in;
                for (std::size_t i = 0; i < d.in; ++i) acc += wrow[i] * xin[i];
                yout[o] = acc;
              }
            }
            return y;
          },
          [&](const Conv2d& c) {
            const std::size_t h = x.dim(2), wd = x.dim(3);
            const std::size_t ho = conv_out(h, c), wo = conv_out(wd, c);
            TensorBuf y(Shape{n, c.out_ch, ho, wo});
            const Real* w = p.data() + off.weight;
            const Real* b = p.data() + off.bias;
            const auto k = c.kernel;
            for (std::size_t s = 0; s < n; ++s) {
              auto xin = x.row(s);
              auto yout = y.row(s);
              for (std::size_t oc = 0; oc < c.out_ch; ++oc) {
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    Real acc = b[oc];
                    for (std::size_t ic = 0; ic < c.in_ch; ++ic) {
                      for (std::size_t ky = 0; ky < k; ++ky) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) -
                                        static_cast<std::ptrdiff_t>(c.padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                          const auto ix = static_cast<std::ptrdiff_t>(ox * c.stride + kx) -
                                          static_cast<std::ptrdiff_t>(c.padding);
                          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                          acc += w[((oc * c.in_ch + ic) * k + ky) * k + kx] *
                                 xin[(ic * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)];
                        }
                      }
                    }
                    yout[(oc * ho + oy) * wo + ox] = acc;
                  }
                }
              }
            }
            return y;
          },
          [&](const Relu&) {
            TensorBuf y = x;
            for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
            return y;
          },
          [&](const Flatten&) { return TensorBuf(Shape{n, x.row_size()}, x.values()); },
          [&](const AvgPool& a) {
            const std::size_t ch = x.dim(1), h = x.dim(2), wd = x.dim(3);
            const std::size_t ho = h / a.window, wo = wd / a.window;
            TensorBuf y(Shape{n, ch, ho, wo});
            const Real scale = 1.0 / static_cast<Real>(a.window * a.window);
            for (std::size_t s = 0; s < n; ++s) {
              auto xin = x.row(s);
              auto yout = y.row(s);
              for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t oy = 0; oy < ho; ++oy)
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    Real acc = 0.0;
                    for (std::size_t ky = 0; ky < a.window; ++ky)
                      for (std::size_t kx = 0; kx < a.window; ++kx)
                        acc += xin[(c * h + oy * a.window + ky) * wd + ox * a.window + kx];
                    yout[(c * ho + oy) * wo + ox] = acc * scale;
                  }
            }
            return y;
          },
      },
      layer);
}

// Returns d/d(input) and accumulates parameter gradients.
TensorBuf backprop_layer(const Layer& layer, const LayerOffsets& off, const std::vector<Real>& p,
                         const TensorBuf& x, const TensorBuf& dy, std::vector<Real>& g) {
  const std::size_t n = x.dim(0);
  return std::visit(
      Overloaded{
          [&](const Dense& d) {
            TensorBuf dx(x.shape());
            const Real* w = p.data() + off.weight;
            Real* gw = g.data() + off.weight;
            Real* gb = g.data() + off.bias;
            for (std::size_t s = 0; s < n; ++s) {
              auto xin = x.row(s);
              auto dyr = dy.row(s);
              auto dxr = dx.row(s);
              for (std::size_t o = 0; o < d.out; ++o) {
                const Real go = dyr[o];
                if (go == 0.0) continue;
                gb[o] += go;
                const Real* wrow = w + o * d.in;
                Real* gwrow = gw + o * d.in;
                for (std::size_t i = 0; i < d.in; ++i) {
                  gwrow[i] += go * xin[i];
                  dxr[i] += go * wrow[i];
                }
              }
            }
            return dx;
          },
          [&](const Conv2d& c) {
            const std::size_t h = x.dim(2), wd = x.dim(3);
            const std::size_t ho = conv_out(h, c), wo = conv_out(wd, c);
            TensorBuf dx(x.shape());
            const Real* w = p.data() + off.weight;
            Real* gw = g.data() + off.weight;
            Real* gb = g.data() + off.bias;
            const auto k = c.kernel;
            for (std::size_t s = 0; s < n; ++s) {
              auto xin = x.row(s);
              auto dyr = dy.row(s);
              auto dxr = dx.row(s);
              for (std::size_t oc = 0; oc < c.out_ch; ++oc) {
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const Real go = dyr[(oc * ho + oy) * wo + ox];
                    if (go == 0.0) continue;
                    gb[oc] += go;
                    for (std::size_t ic = 0; ic < c.in_ch; ++ic) {
                      for (std::size_t ky = 0; ky < k; ++ky) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) -
                                        static_cast<std::ptrdiff_t>(c.padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                          const auto ix = static_cast<std::ptrdiff_t>(ox * c.stride + kx) -
                                          static_cast<std::ptrdiff_t>(c.padding);
                          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                          const std::size_t xi =
                              (ic * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix);
                          const std::size_t wi = ((oc * c.in_ch + ic) * k + ky) * k + kx;
                          gw[wi] += go * xin[xi];
                          dxr[xi] += go * w[wi];
                        }
                      }
                    }
                  }
                }
              }
            }
            return dx;
          },
          [&](const Relu&) {
            TensorBuf dx = dy;
            auto xs = x.data();
            auto ds = dx.data();
            for (std::size_t i = 0; i < ds.size(); ++i)
              if (!(xs[i] > 0.0)) ds[i] = 0.0;
            return dx;
          },
          [&](const Flatten&) { return TensorBuf(x.shape(), dy.values()); },
          [&](const AvgPool& a) {
            const std::size_t ch = x.dim(1), h = x.dim(2), wd = x.dim(3);
            const std::size_t ho = h / a.window, wo = wd / a.window;
            TensorBuf dx(x.shape());
            const Real scale = 1.0 / static_cast<Real>(a.window * a.window);
            for (std::size_t s = 0; s < n; ++s) {
              auto dyr = dy.row(s);
              auto dxr = dx.row(s);
              for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t oy = 0; oy < ho; ++oy)
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const Real go = dyr[(c * ho + oy) * wo + ox] * scale;
                    for (std::size_t ky = 0; ky < a.window; ++ky)
                      for (std::size_t kx = 0; kx < a.window; ++kx)
                        dxr[(c * h + oy * a.window + ky) * wd + ox * a.window + kx] += go;
                  }
            }
            return dx;
          },
      },
      layer);
}

void check_batch(const ModelSpec& spec, const TensorBuf& batch) {
  if (batch.rank() != spec.input_shape.size() + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(), batch.shape().begin() + 1)) {
    throw ShapeError("batch shape " + shape_to_string(batch.shape()) + " does not match input shape " +
                     shape_to_string(spec.input_shape) + " with a leading batch axis");
  }
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(
      Overloaded{
          [](const Dense& d) { return "dense(" + std::to_string(d.in) + ", " + std::to_string(d.out) + ")"; },
          [](const Conv2d& c) {
            std::ostringstream os;
            os << "conv2d(" << c.in_ch << ", " << c.out_ch << ", k=" << c.kernel << ", s=" << c.stride
               << ", p=" << c.padding << ")";
            return os.str();
          },
          [](const Relu&) { return std::string("relu"); },
          [](const Flatten&) { return std::string("flatten"); },
          [](const AvgPool& a) { return "avgpool(" + std::to_string(a.window) + ")"; },
      },
      layer);
}

std::vector<Shape> infer_shapes(const ModelSpec& spec) {
  if (spec.layers.empty()) throw CompositionError("model has no layers");
  if (spec.input_shape.empty() || shape_product(spec.input_shape) == 0)
    throw CompositionError("input shape " + shape_to_string(spec.input_shape) + " is empty");
  std::vector<Shape> shapes;
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    cur = std::visit(
        Overloaded{
            [&](const Dense& d) -> Shape {
              if (d.in == 0 || d.out == 0) composition_failure(spec, i, cur, "nonzero dense sizes");
              if (cur.size() != 1 || cur[0] != d.in)
                composition_failure(spec, i, cur, "(" + std::to_string(d.in) + ")");
              return Shape{d.out};
            },
            [&](const Conv2d& c) -> Shape {
              if (c.in_ch == 0 || c.out_ch == 0 || c.kernel == 0 || c.stride == 0)
                composition_failure(spec, i, cur, "nonzero conv sizes");
              if (cur.size() != 3 || cur[0] != c.in_ch)
                composition_failure(spec, i, cur, "(" + std::to_string(c.in_ch) + ", H, W)");
              if (cur[1] + 2 * c.padding < c.kernel || cur[2] + 2 * c.padding < c.kernel)
                composition_failure(spec, i, cur, "spatial extent at least the kernel size");
              return Shape{c.out_ch, conv_out(cur[1], c), conv_out(cur[2], c)};
            },
            [&](const Relu&) -> Shape { return cur; },
            [&](const Flatten&) -> Shape { return Shape{shape_product(cur)}; },
            [&](const AvgPool& a) -> Shape {
              if (a.window == 0 || cur.size() != 3 || cur[1] < a.window || cur[2] < a.window)
                composition_failure(spec, i, cur, "(C, H, W) with H, W >= window");
              return Shape{cur[0], cur[1] / a.window, cur[2] / a.window};
            },
        },
        layer);
    shapes.push_back(cur);
  }
  if (cur.size() != 1 || cur[0] != spec.num_classes) {
    throw CompositionError("layer " + std::to_string(spec.layers.size() - 1) + " (" +
                           layer_name(spec.layers.back()) + ") -> output: shape " + shape_to_string(cur) +
                           ", expected (" + std::to_string(spec.num_classes) + ") classes");
  }
  return shapes;
}

void validate(const ModelSpec& spec) { (void)infer_shapes(spec); }

ModelSpec mlp_spec(const Shape& input_shape, std::size_t hidden, std::size_t num_classes) {
  ModelSpec spec;
  spec.input_shape = input_shape;
  spec.num_classes = num_classes;
  const auto in = shape_product(input_shape);
  if (input_shape.size() != 1) spec.layers.emplace_back(Flatten{});
  spec.layers.emplace_back(Dense{in, hidden});
  spec.layers.emplace_back(Relu{});
  spec.layers.emplace_back(Dense{hidden, num_classes});
  return spec;
}

ModelSpec small_cnn_spec(const Shape& input_shape, std::size_t num_classes) {
  if (input_shape.size() != 3) throw CompositionError("small_cnn_spec expects a (C, H, W) input");
  ModelSpec spec;
  spec.input_shape = input_shape;
  spec.num_classes = num_classes;
  spec.layers = {Conv2d{input_shape[0], 8, 3, 1, 1}, Relu{}, AvgPool{2}, Conv2d{8, 16, 3, 1, 1}, Relu{},
                 AvgPool{2}, Flatten{}};
  // 3x3 convs with padding 1 keep H and W; each pool halves them.
  const std::size_t flat = 16 * (input_shape[1] / 2 / 2) * (input_shape[2] / 2 / 2);
  spec.layers.emplace_back(Dense{flat, num_classes});
  validate(spec);
  return spec;
}

ParamLayout make_layout(const ModelSpec& spec) {
  ParamLayout layout;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (const auto* d = std::get_if<Dense>(&layer)) {
      layout.blocks.push_back({i, "weight", offset, Shape{d->out, d->in}});
      offset += d->out * d->in;
      layout.blocks.push_back({i, "bias", offset, Shape{d->out}});
      offset += d->out;
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      layout.blocks.push_back({i, "weight", offset, Shape{c->out_ch, c->in_ch, c->kernel, c->kernel}});
      offset += c->out_ch * c->in_ch * c->kernel * c->kernel;
      layout.blocks.push_back({i, "bias", offset, Shape{c->out_ch}});
      offset += c->out_ch;
    }
  }
  layout.total = offset;
  return layout;
}

GradVector GradVector::zeros_like(const ParamVector& params) {
  return GradVector{params.layout, std::vector<Real>(params.values.size(), 0.0)};
}

ParamVector zeros(const ModelSpec& spec) {
  validate(spec);
  auto layout = make_layout(spec);
  const auto total = layout.total;
  return ParamVector{std::move(layout), std::vector<Real>(total, 0.0)};
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector params = zeros(spec);
  for (const auto& block : params.layout.blocks) {
    if (block.name != "weight") continue;
    // fan_in = product of all but the leading (output) axis
    std::size_t fan_in = 1;
    for (std::size_t a = 1; a < block.shape.size(); ++a) fan_in *= block.shape[a];
    const Real bound = std::sqrt(6.0 / static_cast<Real>(fan_in));
    auto rng = make_stream(seed, {name_tag("init"), block.layer});
    const auto count = shape_product(block.shape);
    for (std::size_t j = 0; j < count; ++j) params.values[block.offset + j] = uniform(rng, -bound, bound);
  }
  return params;
}

ForwardTrace forward_trace(const ModelSpec& spec, const ParamVector& params, const TensorBuf& batch) {
  validate(spec);
  check_params(spec, params);
  check_batch(spec, batch);
  const auto offs = layer_offsets(spec, params.layout);
  ForwardTrace trace;
  trace.inputs.reserve(spec.layers.size());
  TensorBuf cur = batch;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    TensorBuf next = apply_layer(spec.layers[i], offs[i], params.values, cur);
    trace.inputs.push_back(std::move(cur));
    cur = std::move(next);
  }
  trace.output = std::move(cur);
  return trace;
}

TensorBuf forward(const ModelSpec& spec, const ParamVector& params, const TensorBuf& batch) {
  validate(spec);
  check_params(spec, params);
  check_batch(spec, batch);
  const auto offs = layer_offsets(spec, params.layout);
  TensorBuf cur = batch;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) cur = apply_layer(spec.layers[i], offs[i], params.values, cur);
  return cur;
}

void backward(const ModelSpec& spec, const ParamVector& params, const ForwardTrace& trace,
              const TensorBuf& grad_logits, GradVector& grad) {
  if (grad.layout != params.layout || grad.values.size() != params.values.size())
    throw ShapeError("backward: gradient layout does not match parameters");
  if (grad_logits.shape() != trace.output.shape())
    throw ShapeError("backward: upstream gradient shape " + shape_to_string(grad_logits.shape()) +
                     " != logits shape " + shape_to_string(trace.output.shape()));
  const auto offs = layer_offsets(spec, params.layout);
  TensorBuf dy = grad_logits;
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    dy = backprop_layer(spec.layers[i], offs[i], params.values, trace.inputs[i], dy, grad.values);
  }
}

TensorBuf penultimate_features(const ModelSpec& spec, const ParamVector& params, const TensorBuf& batch) {
  validate(spec);
  check_params(spec, params);
  check_batch(spec, batch);
  std::size_t last_dense = spec.layers.size();
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    if (std::holds_alternative<Dense>(spec.layers[i])) {
      last_dense = i;
      break;
    }
  }
  if (last_dense == spec.layers.size()) throw CompositionError("model has no dense layer");
  const auto offs = layer_offsets(spec, params.layout);
  TensorBuf cur = batch;
  for (std::size_t i = 0; i < last_dense; ++i) cur = apply_layer(spec.layers[i], offs[i], params.values, cur);
  if (cur.rank() != 2) cur = TensorBuf(Shape{cur.dim(0), cur.row_size()}, cur.values());
  return cur;
}

}  // namespace tofu::nn
