#include "tofu/data/synth.hpp"

#include <algorithm>
#include <cmath>

namespace tofu::data {

LabeledDataset synth_gaussian(std::size_t num_classes, std::size_t per_class, std::size_t dim, Real separation,
                              std::uint64_t seed) {
  if (num_classes == 0 || per_class == 0 || dim == 0)
    throw ArgumentError("synth_gaussian: counts must be positive");
  if (dim < num_classes)
    throw ArgumentError("synth_gaussian: dim (" + std::to_string(dim) + ") must be at least num_classes (" +
                        std::to_string(num_classes) + ")");
  const std::size_t n = num_classes * per_class;
  std::vector<Real> features(n * dim);
  std::vector<int> labels(n);
  std::vector<SampleId> ids(n);
  auto rng = make_stream(seed, {name_tag("synth_gaussian")});
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = i % num_classes;
    labels[i] = static_cast<int>(c);
    ids[i] = static_cast<SampleId>(i);
    Real* x = features.data() + i * dim;
    for (std::size_t d = 0; d < dim; ++d) x[d] = standard_normal(rng);
    x[c] += separation;
  }
  return LabeledDataset({dim}, num_classes, std::move(features), std::move(labels), std::move(ids));
}

namespace {

constexpr std::size_t kGrid = 3;

// Bilinear upsampling of a kGrid x kGrid grid to h x w, corners aligned.
std::vector<Real> upsample(const std::vector<Real>& grid, std::size_t h, std::size_t w) {
  std::vector<Real> out(h * w);
  auto coord = [](std::size_t i, std::size_t n) {
    return n == 1 ? 0.0 : static_cast<Real>(i) * static_cast<Real>(kGrid - 1) / static_cast<Real>(n - 1);
  };
  for (std::size_t y = 0; y < h; ++y) {
    const Real u = coord(y, h);
    const auto y0 = std::min(static_cast<std::size_t>(u), kGrid - 2);
    const Real fy = u - static_cast<Real>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const Real v = coord(x, w);
      const auto x0 = std::min(static_cast<std::size_t>(v), kGrid - 2);
      const Real fx = v - static_cast<Real>(x0);
      auto g = [&](std::size_t r, std::size_t c) { return grid[r * kGrid + c]; };
      out[y * w + x] = (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x0 + 1)) +
                       fy * ((1 - fx) * g(y0 + 1, x0) + fx * g(y0 + 1, x0 + 1));
    }
  }
  return out;
}

Real logistic(Real v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

LabeledDataset synth_images(std::size_t num_classes, std::size_t per_class, const Shape& image_shape, Real separation,
                            std::uint64_t seed) {
  if (num_classes == 0 || per_class == 0) throw ArgumentError("synth_images: counts must be positive");
  if (image_shape.size() != 3 || shape_product(image_shape) == 0)
    throw ArgumentError("synth_images: image shape must be a nonempty (C, H, W)");
  const std::size_t ch = image_shape[0], h = image_shape[1], w = image_shape[2];
  auto proto_rng = make_stream(seed, {name_tag("synth_images"), name_tag("prototypes")});
  std::vector<std::vector<Real>> protos(num_classes);
  for (auto& p : protos) {
    for (std::size_t k = 0; k < ch; ++k) {
      std::vector<Real> grid(kGrid * kGrid);
      for (auto& g : grid) g = separation * standard_normal(proto_rng);
      const auto up = upsample(grid, h, w);
      p.insert(p.end(), up.begin(), up.end());
    }
  }
  const std::size_t n = num_classes * per_class, dim = ch * h * w;
  std::vector<Real> features(n * dim);
  std::vector<int> labels(n);
  std::vector<SampleId> ids(n);
  auto rng = make_stream(seed, {name_tag("synth_images"), name_tag("samples")});
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = i % num_classes;
    labels[i] = static_cast<int>(c);
    ids[i] = static_cast<SampleId>(i);
    for (std::size_t d = 0; d < dim; ++d) features[i * dim + d] = logistic(protos[c][d] + standard_normal(rng));
  }
  return LabeledDataset(image_shape, num_classes, std::move(features), std::move(labels), std::move(ids));
}

LabeledDataset squash_to_images(const LabeledDataset& ds, const Shape& image_shape) {
  if (image_shape.size() != 3) throw ArgumentError("squash_to_images: image shape must be (C, H, W)");
  std::vector<Real> features = ds.features();
  for (auto& v : features) v = logistic(v);
  LabeledDataset out(ds.sample_shape(), ds.num_classes(), std::move(features), ds.labels(), ds.ids());
  return out.reshaped(image_shape);
}

}  // namespace tofu::data
