#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "test_util.hpp"
#include "tofu/nn/checkpoint.hpp"
#include "tofu/nn/loss.hpp"
#include "tofu/nn/model.hpp"
#include "tofu/nn/optim.hpp"

using namespace tofu;
using namespace tofu::nn;
using tofu::testing::central_difference;
using tofu::testing::random_tensor;
using tofu::testing::relative_error;

namespace {

ModelSpec dense_only(std::size_t in, std::size_t out) {
  return ModelSpec{{Dense{in, out}}, {in}, out};
}

}  // namespace

TEST_CASE("init_params is deterministic, seed sensitive and counts parameters") {
  const auto spec = dense_only(2, 3);
  const auto a = init_params(spec, 7);
  const auto b = init_params(spec, 7);
  CHECK(a == b);
  CHECK(a.size() == 9);

  const auto s1 = init_params(spec, 1);
  const auto s2 = init_params(spec, 2);
  CHECK(s1.values != s2.values);

  // biases start at zero
  for (const auto& block : a.layout.blocks)
    if (block.name == "bias")
      for (std::size_t j = 0; j < shape_product(block.shape); ++j) CHECK(a.values[block.offset + j] == 0.0);
}

TEST_CASE("invalid spec names the offending layer pair") {
  ModelSpec spec{{Dense{4, 8}, Relu{}, Dense{5, 2}}, {4}, 2};
  try {
    (void)init_params(spec, 0);
    FAIL("expected a composition error");
  } catch (const CompositionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("layer 1 (relu)") != std::string::npos);
    CHECK(msg.find("layer 2 (dense(5, 2))") != std::string::npos);
  }

  ModelSpec wrong_classes{{Dense{4, 3}}, {4}, 2};
  CHECK_THROWS_AS(validate(wrong_classes), CompositionError);

  ModelSpec conv_on_vector{{Conv2d{1, 2, 3, 1, 0}, Flatten{}, Dense{2, 2}}, {9}, 2};
  CHECK_THROWS_AS(validate(conv_on_vector), CompositionError);
}

TEST_CASE("default architectures compose") {
  CHECK_NOTHROW(validate(mlp_spec({48}, 64, 8)));
  CHECK_NOTHROW(validate(mlp_spec({3, 4, 4}, 64, 8)));
  const auto cnn = small_cnn_spec({3, 16, 16}, 10);
  const auto shapes = infer_shapes(cnn);
  CHECK(shapes.back() == Shape{10});
  CHECK(shapes[shapes.size() - 2] == Shape{16 * 4 * 4});
}

TEST_CASE("forward: zero params give zero logits") {
  const auto spec = small_cnn_spec({3, 8, 8}, 5);
  const auto params = zeros(spec);
  RngStream rng(3);
  const auto x = random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0);
  const auto logits = forward(spec, params, x);
  CHECK(logits.shape() == Shape{2, 5});
  for (auto v : logits.data()) CHECK(v == 0.0);
}

TEST_CASE("forward: duplicated sample gives identical rows") {
  const auto spec = mlp_spec({6}, 10, 3);
  const auto params = init_params(spec, 11);
  RngStream rng(5);
  const auto one = random_tensor({1, 6}, rng);
  std::vector<Real> four;
  for (int i = 0; i < 4; ++i) four.insert(four.end(), one.data().begin(), one.data().end());
  const auto logits = forward(spec, params, TensorBuf({4, 6}, four));
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(logits.row(i)[j] == logits.row(0)[j]);
}

TEST_CASE("forward: hand-built identity dense layer") {
  const auto spec = dense_only(2, 2);
  auto params = zeros(spec);
  // weight [[1,0],[0,1]], bias [0,0]
  params.values = {1, 0, 0, 1, 0, 0};
  const auto logits = forward(spec, params, TensorBuf({1, 2}, {1.0, 2.0}));
  CHECK(logits.values() == std::vector<Real>{1.0, 2.0});
}

TEST_CASE("forward: batch permutation permutes logits") {
  const auto spec = small_cnn_spec({2, 8, 8}, 4);
  const auto params = init_params(spec, 2);
  RngStream rng(9);
  const auto x = random_tensor({3, 2, 8, 8}, rng, 0.0, 1.0);
  const std::size_t perm[3] = {2, 0, 1};
  std::vector<Real> px;
  for (auto p : perm) px.insert(px.end(), x.row(p).begin(), x.row(p).end());
  const auto a = forward(spec, params, x);
  const auto b = forward(spec, params, TensorBuf(x.shape(), px));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(b.row(i)[j] == a.row(perm[i])[j]);
}

TEST_CASE("forward rejects shape mismatch") {
  const auto spec = mlp_spec({6}, 4, 3);
  const auto params = init_params(spec, 0);
  CHECK_THROWS_AS(forward(spec, params, TensorBuf({2, 5})), ShapeError);
  CHECK_THROWS_AS(forward(spec, init_params(mlp_spec({5}, 4, 3), 0), TensorBuf({2, 6})), ShapeError);
}

TEST_CASE("task_loss values") {
  SUBCASE("uniform logits give ln C") {
    const TensorBuf logits({2, 5}, std::vector<Real>(10, 0.3));
    const std::vector<int> labels{0, 4};
    for (auto l : task_loss(logits, labels)) CHECK(l == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  }
  SUBCASE("large margin") {
    const TensorBuf logits({1, 2}, {10.0, -10.0});
    const std::vector<int> labels{0};
    // log(1 + e^-20)
    CHECK(task_loss(logits, labels)[0] == doctest::Approx(2.061153620314381e-09).epsilon(1e-9));
  }
  SUBCASE("nonnegative on random logits") {
    RngStream rng(1);
    const auto logits = random_tensor({64, 7}, rng, -30.0, 30.0);
    std::vector<int> labels(64);
    for (auto& y : labels) y = static_cast<int>(uniform_index(rng, 7));
    for (auto l : task_loss(logits, labels)) CHECK(l >= 0.0);
  }
  SUBCASE("out-of-range label") {
    const TensorBuf logits({1, 3}, {0.0, 0.0, 0.0});
    const std::vector<int> bad{3};
    CHECK_THROWS_AS(task_loss(logits, bad), ArgumentError);
    const std::vector<int> neg{-1};
    CHECK_THROWS_AS(task_loss(logits, neg), ArgumentError);
  }
}

TEST_CASE("kl_div values") {
  RngStream rng(4);
  const auto a = random_tensor({16, 5}, rng, -5.0, 5.0);
  for (auto v : kl_div(a, a)) CHECK(std::abs(v) <= 1e-12);

  // p = softmax([ln 2, 0]) = [2/3, 1/3], q uniform: hand sum of p ln(p/q)
  const TensorBuf p({1, 2}, {std::log(2.0), 0.0});
  const TensorBuf q({1, 2}, {0.0, 0.0});
  CHECK(kl_div(p, q)[0] == doctest::Approx(0.056633012265132426).epsilon(1e-12));
  CHECK(kl_div(p, q)[0] != doctest::Approx(kl_div(q, p)[0]));

  const auto b = random_tensor({16, 5}, rng, -5.0, 5.0);
  for (auto v : kl_div(a, b)) CHECK(v >= 0.0);
  CHECK_THROWS_AS(kl_div(a, TensorBuf({16, 4})), ShapeError);
}

TEST_CASE("tofu_loss reduces to the task loss") {
  const auto spec = mlp_spec({6}, 8, 4);
  const auto params = init_params(spec, 21);
  RngStream rng(8);
  const auto x = random_tensor({5, 6}, rng);
  const auto xt = random_tensor({5, 6}, rng);
  const std::vector<int> y{0, 1, 2, 3, 1};
  const auto ce = task_loss(forward(spec, params, xt), y);
  const Real mean_ce = std::accumulate(ce.begin(), ce.end(), 0.0) / 5.0;

  SUBCASE("identity transform, any gamma") {
    const auto a = tofu_loss(spec, params, x, x, y, 3.7);
    const auto b = tofu_loss(spec, params, x, x, y, 0.0);
    CHECK(a.loss == b.loss);
    CHECK(a.grad.values == b.grad.values);
    const auto ce_x = task_loss(forward(spec, params, x), y);
    CHECK(a.loss == doctest::Approx(std::accumulate(ce_x.begin(), ce_x.end(), 0.0) / 5.0).epsilon(1e-14));
  }
  SUBCASE("gamma zero ignores the clean batch") {
    const auto r = tofu_loss(spec, params, x, xt, y, 0.0);
    CHECK(r.loss == doctest::Approx(mean_ce).epsilon(1e-14));
  }
  SUBCASE("positive gamma adds the mean KL") {
    const auto kl = kl_div(forward(spec, params, xt), forward(spec, params, x));
    const Real mean_kl = std::accumulate(kl.begin(), kl.end(), 0.0) / 5.0;
    CHECK(tofu_loss(spec, params, x, xt, y, 0.5).loss == doctest::Approx(mean_ce + 0.5 * mean_kl).epsilon(1e-12));
  }
  CHECK_THROWS_AS(tofu_loss(spec, params, x, random_tensor({4, 6}, rng), y, 0.1), ShapeError);
}

TEST_CASE("tofu_loss gradient matches central differences") {
  auto check_spec = [](const ModelSpec& spec, const Shape& batch_shape, Real gamma, std::uint64_t seed) {
    const auto params = init_params(spec, seed);
    RngStream rng(seed + 100);
    const auto x = random_tensor(batch_shape, rng, 0.0, 1.0);
    const auto xt = random_tensor(batch_shape, rng, 0.0, 1.0);
    std::vector<int> y(batch_shape[0]);
    for (auto& v : y) v = static_cast<int>(uniform_index(rng, spec.num_classes));
    const auto analytic = tofu_loss(spec, params, x, xt, y, gamma);
    auto f = [&](const ParamVector& p) { return tofu_loss(spec, p, x, xt, y, gamma).loss; };
    for (int k = 0; k < 10; ++k) {
      const auto i = uniform_index(rng, params.size());
      const Real numeric = central_difference(f, params, i, 1e-4);
      CHECK(relative_error(analytic.grad.values[i], numeric) < 1e-4);
    }
  };
  SUBCASE("two-layer perceptron") { check_spec(mlp_spec({6}, 8, 4), {5, 6}, 0.7, 1); }
  SUBCASE("negative gamma") { check_spec(mlp_spec({6}, 8, 4), {5, 6}, -1.0, 2); }
  SUBCASE("convolutional net") { check_spec(small_cnn_spec({2, 8, 8}, 3), {3, 2, 8, 8}, 0.3, 3); }
  SUBCASE("strided conv without padding") {
    ModelSpec spec{{Conv2d{1, 3, 3, 2, 0}, Relu{}, Flatten{}, Dense{3 * 3 * 3, 2}}, {1, 7, 7}, 2};
    check_spec(spec, {2, 1, 7, 7}, 1.5, 4);
  }
}

TEST_CASE("sgd_step arithmetic") {
  const auto spec = ModelSpec{{Dense{1, 1}}, {1}, 1};
  ParamVector p = zeros(spec);
  p.values = {1.0, 1.0};
  GradVector g = GradVector::zeros_like(p);
  CHECK(sgd_step(p, g, 0.1) == p);

  g.values = {1.0, 2.0};
  CHECK(sgd_step(p, g, 0.5).values == std::vector<Real>{0.5, 0.0});

  const auto two = sgd_step(sgd_step(p, g, 0.25), g, 0.25);
  const auto one = sgd_step(p, g, 0.5);
  for (std::size_t i = 0; i < 2; ++i) CHECK(two.values[i] == doctest::Approx(one.values[i]).epsilon(1e-15));

  GradVector wrong{make_layout(dense_only(2, 1)), {0, 0, 0}};
  CHECK_THROWS_AS(sgd_step(p, wrong, 0.1), ShapeError);
  CHECK_THROWS_AS(sgd_step(p, g, 0.0), ArgumentError);
}

TEST_CASE("Sgd without momentum matches sgd_step") {
  const auto spec = mlp_spec({3}, 4, 2);
  ParamVector p = init_params(spec, 5);
  GradVector g = GradVector::zeros_like(p);
  RngStream rng(2);
  for (auto& v : g.values) v = uniform(rng, -1, 1);
  Sgd opt(0.1);
  ParamVector q = p;
  opt.step(q, g);
  opt.step(q, g);
  CHECK(q == sgd_step(sgd_step(p, g, 0.1), g, 0.1));
}

TEST_CASE("checkpoint round trip and failure modes") {
  const auto spec = small_cnn_spec({3, 8, 8}, 4);
  const auto params = init_params(spec, 99);
  const auto dir = std::filesystem::temp_directory_path() / "tofu_test_nn_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "p.tfck";
  save_checkpoint(params, path);
  CHECK(load_checkpoint(path) == params);

  auto bytes = encode_checkpoint(params);
  SUBCASE("truncated") {
    bytes.resize(bytes.size() - 5);
    CHECK_THROWS_AS(decode_checkpoint(bytes), ParseError);
    bytes.resize(6);
    CHECK_THROWS_AS(decode_checkpoint(bytes), ParseError);
  }
  SUBCASE("version mismatch") {
    bytes[4] = 2;
    CHECK_THROWS_AS(decode_checkpoint(bytes), VersionError);
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  }
  SUBCASE("truncated file on disk") {
    std::ofstream(path, std::ios::binary | std::ios::trunc).write(reinterpret_cast<const char*>(bytes.data()), 40);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.tfck"), Error);
}
