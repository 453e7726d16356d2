#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "tofu/data/dataset.hpp"
#include "tofu/data/image_io.hpp"
#include "tofu/data/partition.hpp"
#include "tofu/data/synth.hpp"
#include "tofu/nn/loss.hpp"
#include "tofu/nn/optim.hpp"

using namespace tofu;
using namespace tofu::data;

namespace {

// Softmax regression trained by full-batch gradient descent.
double linear_probe_train_accuracy(const LabeledDataset& ds, int steps) {
  std::vector<nn::Layer> layers;
  if (ds.sample_shape().size() > 1) layers.push_back(nn::Flatten{});
  layers.push_back(nn::Dense{ds.sample_size(), ds.num_classes()});
  nn::ModelSpec spec{layers, ds.sample_shape(), ds.num_classes()};
  auto params = nn::zeros(spec);
  const auto x = ds.all_inputs();
  for (int s = 0; s < steps; ++s) {
    auto r = nn::task_loss_and_grad(spec, params, x, ds.labels());
    params = nn::sgd_step(params, r.grad, 0.5);
  }
  const auto logits = nn::forward(spec, params, x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto row = logits.row(i);
    const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
    correct += pred == ds.label(i);
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::set<SampleId> id_set(const LabeledDataset& ds) { return {ds.ids().begin(), ds.ids().end()}; }

}  // namespace

TEST_CASE("synth_gaussian") {
  const auto a = synth_gaussian(4, 50, 6, 3.0, 17);
  const auto b = synth_gaussian(4, 50, 6, 3.0, 17);
  CHECK(a.features() == b.features());
  CHECK(a.labels() == b.labels());
  CHECK(a.size() == 200);
  CHECK(synth_gaussian(4, 50, 6, 3.0, 18).features() != a.features());

  SUBCASE("well separated classes are linearly separable") {
    const auto ds = synth_gaussian(3, 100, 5, 20.0, 4);
    CHECK(linear_probe_train_accuracy(ds, 200) > 0.99);
  }
  SUBCASE("zero separation makes class means coincide") {
    const auto ds = synth_gaussian(3, 3000, 3, 0.0, 5);
    std::vector<std::vector<Real>> means(3, std::vector<Real>(3, 0.0));
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t d = 0; d < 3; ++d) means[ds.label(i)][d] += ds.input(i)[d] / 3000.0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t d = 0; d < 3; ++d) CHECK(std::abs(means[c][d]) < 0.1);
  }
  CHECK_THROWS_AS(synth_gaussian(5, 10, 3, 1.0, 0), ArgumentError);
  CHECK_THROWS_AS(synth_gaussian(0, 10, 3, 1.0, 0), ArgumentError);
}

TEST_CASE("synth_images") {
  const Shape shape{2, 5, 5};
  const auto a = synth_images(3, 20, shape, 1.0, 9);
  CHECK(a.sample_shape() == shape);
  CHECK(a.size() == 60);
  CHECK(a.features() == synth_images(3, 20, shape, 1.0, 9).features());
  CHECK(a.features() != synth_images(3, 20, shape, 1.0, 10).features());
  for (auto v : a.features()) CHECK((v > 0.0 && v < 1.0));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.label(i) == static_cast<int>(i % 3));

  // logit undoes the squash, so averaging it per class recovers the prototype
  auto prototypes = [](const LabeledDataset& ds) {
    const std::size_t dim = ds.sample_size();
    std::vector<std::vector<Real>> m(ds.num_classes(), std::vector<Real>(dim, 0.0));
    std::vector<std::size_t> count(ds.num_classes(), 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      ++count[ds.label(i)];
      for (std::size_t d = 0; d < dim; ++d) {
        const Real x = ds.input(i)[d];
        m[ds.label(i)][d] += std::log(x / (1 - x));
      }
    }
    for (std::size_t c = 0; c < m.size(); ++c)
      for (auto& v : m[c]) v /= static_cast<Real>(count[c]);
    return m;
  };
  SUBCASE("prototypes are bilinear between grid points") {
    // 5 pixels over a 3 point grid: odd pixels sit halfway between even ones
    const auto m = prototypes(synth_images(2, 4000, {1, 5, 5}, 2.0, 3));
    for (const auto& p : m) {
      for (std::size_t r = 0; r < 5; r += 2)
        for (std::size_t c = 1; c < 5; c += 2)
          CHECK(std::abs(p[r * 5 + c] - 0.5 * (p[r * 5 + c - 1] + p[r * 5 + c + 1])) < 0.1);
      for (std::size_t r = 1; r < 5; r += 2)
        for (std::size_t c = 0; c < 5; ++c)
          CHECK(std::abs(p[r * 5 + c] - 0.5 * (p[(r - 1) * 5 + c] + p[(r + 1) * 5 + c])) < 0.1);
    }
  }
  SUBCASE("zero separation leaves only noise") {
    for (const auto& p : prototypes(synth_images(2, 3000, {1, 3, 3}, 0.0, 4)))
      for (auto v : p) CHECK(std::abs(v) < 0.1);
  }
  SUBCASE("separable at large separation") {
    CHECK(linear_probe_train_accuracy(synth_images(4, 100, {1, 6, 6}, 5.0, 5), 300) > 0.99);
  }
  CHECK_THROWS_AS(synth_images(0, 10, shape, 1.0, 0), ArgumentError);
  CHECK_THROWS_AS(synth_images(2, 10, {4, 4}, 1.0, 0), ArgumentError);
  CHECK_THROWS_AS(synth_images(2, 10, {1, 0, 4}, 1.0, 0), ArgumentError);
}

TEST_CASE("squash_to_images maps into the unit interval") {
  const auto ds = squash_to_images(synth_gaussian(4, 10, 12, 5.0, 1), {3, 2, 2});
  CHECK(ds.sample_shape() == Shape{3, 2, 2});
  for (auto v : ds.features()) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("raw image files") {
  SUBCASE("hand-written two record fixture") {
    // 2 records, 1 channel, 1x2 pixels, 3 classes
    std::vector<std::uint8_t> bytes{'T', 'F', 'U', '1', 2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0,
                                    2, 0,   255, 0,   51, 102};
    const auto ds = decode_images(bytes);
    REQUIRE(ds.size() == 2);
    CHECK(ds.sample_shape() == Shape{1, 1, 2});
    CHECK(ds.labels() == std::vector<int>{2, 0});
    CHECK(ds.input(0)[0] == 0.0);
    CHECK(ds.input(0)[1] == 1.0);
    CHECK(ds.input(1)[0] == doctest::Approx(0.2));
    CHECK(ds.input(1)[1] == doctest::Approx(0.4));

    auto short_payload = bytes;
    short_payload.pop_back();
    try {
      (void)decode_images(short_payload);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() == 27);  // header + one complete record
    }
    auto long_payload = bytes;
    long_payload.push_back(0);
    CHECK_THROWS_AS(decode_images(long_payload), ParseError);

    auto bad_label = bytes;
    bad_label[24] = 3;
    CHECK_THROWS_AS(decode_images(bad_label), ParseError);
    CHECK_THROWS_AS(decode_images(bytes, ImageFormat{3, {}, {}, {}}), ParseError);
    CHECK_THROWS_AS(decode_images({'T', 'F', 'U'}), ParseError);
  }
  SUBCASE("write then read preserves every pixel") {
    RngStream rng(3);
    std::vector<Real> px(5 * 3 * 4 * 4);
    for (auto& v : px) v = static_cast<Real>(uniform_index(rng, 256)) / 255.0;
    std::vector<int> labels{0, 1, 2, 3, 4};
    std::vector<SampleId> ids{0, 1, 2, 3, 4};
    const LabeledDataset ds({3, 4, 4}, 5, px, labels, ids);
    const auto path = std::filesystem::temp_directory_path() / "tofu_test_images.tfu";
    write_images(ds, path);
    const auto back = load_images(path, ImageFormat{3, 4, 4, 5});
    CHECK(back.features() == ds.features());
    CHECK(back.labels() == ds.labels());
  }
}

TEST_CASE("largest_remainder keeps totals exact") {
  const std::vector<Real> p{0.5, 0.25, 0.25};
  CHECK(largest_remainder(p, 10) == std::vector<std::size_t>{5, 3, 2});
  const std::vector<Real> thirds{1.0 / 3, 1.0 / 3, 1.0 / 3};
  const auto c = largest_remainder(thirds, 100);
  CHECK(std::accumulate(c.begin(), c.end(), std::size_t{0}) == 100);
}

TEST_CASE("dirichlet_partition") {
  const auto ds = synth_gaussian(5, 40, 5, 1.0, 2);
  SUBCASE("single client gets everything") {
    const auto parts = dirichlet_partition(ds, {1, 1.0, 3});
    REQUIRE(parts.size() == 1);
    CHECK(parts[0].ids() == ds.ids());
  }
  SUBCASE("true partition across seeds and concentrations") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      for (Real kappa : {0.1, 1.0, 10.0}) {
        const auto parts = dirichlet_partition(ds, {seed % 7 + 1, kappa, seed});
        std::multiset<SampleId> all;
        for (const auto& p : parts) all.insert(p.ids().begin(), p.ids().end());
        CHECK(all.size() == ds.size());
        CHECK(std::set<SampleId>(all.begin(), all.end()) == id_set(ds));
        // labels travel with their ids
        for (const auto& p : parts)
          for (std::size_t i = 0; i < p.size(); ++i) CHECK(p.label(i) == ds.label(static_cast<std::size_t>(p.id(i))));
      }
    }
  }
  SUBCASE("deterministic") {
    const auto a = dirichlet_partition(ds, {4, 0.5, 9});
    const auto b = dirichlet_partition(ds, {4, 0.5, 9});
    for (std::size_t k = 0; k < 4; ++k) CHECK(a[k].ids() == b[k].ids());
  }
  SUBCASE("huge concentration is near uniform") {
    const auto big = synth_gaussian(3, 1000, 3, 1.0, 1);
    const auto parts = dirichlet_partition(big, {4, 1e6, 5});
    for (const auto& p : parts) {
      std::vector<std::size_t> per_class(3, 0);
      for (auto y : p.labels()) ++per_class[static_cast<std::size_t>(y)];
      for (auto n : per_class) CHECK(std::abs(static_cast<Real>(n) / 1000.0 - 0.25) <= 0.05);
    }
  }
  CHECK_THROWS_AS(dirichlet_partition(ds, {0, 1.0, 0}), ArgumentError);
  CHECK_THROWS_AS(dirichlet_partition(ds, {2, 0.0, 0}), ArgumentError);
}

TEST_CASE("designate_forget") {
  const auto ds = synth_gaussian(4, 25, 4, 1.0, 8);  // 100 samples
  const std::vector<LabeledDataset> clients{ds, ds.subset(std::vector<std::size_t>{0, 1, 2}), ds};

  ForgetSpec spec;
  spec.fractions = {{0, 0.3}, {1, 0.0}, {2, 1.0}};
  spec.seed = 4;
  const auto out = designate_forget(clients, spec);
  REQUIRE(out.size() == 3);
  CHECK(out[0].forget.size() == 30);
  CHECK(out[0].retain.size() == 70);
  CHECK(out[1].forget.empty());
  CHECK(out[1].retain.ids() == out[1].full.ids());
  CHECK(out[2].retain.empty());

  for (const auto& c : out) {
    const auto f = id_set(c.forget), r = id_set(c.retain);
    std::vector<SampleId> both;
    std::set_intersection(f.begin(), f.end(), r.begin(), r.end(), std::back_inserter(both));
    CHECK(both.empty());
    CHECK(f.size() + r.size() == c.full.size());
    // retain keeps the original order
    CHECK(std::is_sorted(c.retain.ids().begin(), c.retain.ids().end()));
  }

  const auto again = designate_forget(clients, spec);
  CHECK(again[0].forget.ids() == out[0].forget.ids());

  SUBCASE("unlisted clients forget nothing") {
    ForgetSpec only_one{{{0, 0.5}}, 1};
    const auto r = designate_forget(clients, only_one);
    CHECK(r[2].forget.empty());
  }
  SUBCASE("rounding is half up") {
    CHECK(forget_count(0.25, 10) == 3);
    CHECK(forget_count(0.24, 10) == 2);
    CHECK(forget_count(0.9, 7) == 6);
  }
  CHECK_THROWS_AS(designate_forget(clients, ForgetSpec{{{5, 0.1}}, 0}), ArgumentError);
  CHECK_THROWS_AS(designate_forget(clients, ForgetSpec{{{0, 1.5}}, 0}), ArgumentError);
}

TEST_CASE("batch_iter") {
  const auto ds = synth_gaussian(2, 25, 2, 1.0, 1);  // 50 samples
  const auto batches = batch_iter(ds, 16, 42);
  CHECK(batches.size() == 4);
  CHECK(batches.back().size() == 2);
  std::size_t total = 0;
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    total += b.size();
    seen.insert(b.begin(), b.end());
  }
  CHECK(total == 50);
  CHECK(seen.size() == 50);
  CHECK(batch_iter(ds, 16, 42) == batches);
  CHECK(batch_iter(ds, 16, 43) != batches);
  CHECK(batch_iter(ds, 50, 1).size() == 1);
  CHECK(batch_iter(ds, 500, 1).size() == 1);
  CHECK_THROWS_AS(batch_iter(ds, 0, 1), ArgumentError);
}

TEST_CASE("dataset invariants are enforced") {
  CHECK_THROWS_AS(LabeledDataset({2}, 2, {0, 0, 0, 0}, {0, 1}, {3, 3}), ArgumentError);
  CHECK_THROWS_AS(LabeledDataset({2}, 2, {0, 0, 0, 0}, {0, 2}, {0, 1}), ArgumentError);
  CHECK_THROWS_AS(LabeledDataset({2}, 2, {0, 0, 0}, {0, 1}, {0, 1}), ShapeError);
}
