#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tofu/transforms/catalog.hpp"
#include "tofu/transforms/schedule.hpp"

using namespace tofu;
using namespace tofu::transforms;
using tofu::nn::TensorBuf;

namespace {

TensorBuf random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  RngStream rng(seed);
  return testing::random_tensor({c, h, w}, rng, 0.0, 1.0);
}

bool in_unit_range(const TensorBuf& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](Real v) { return v >= 0 && v <= 1; });
}

const std::vector<Op> kAllOps{
    Op::HorizontalFlip, Op::VerticalFlip, Op::ShiftScaleRotate, Op::RandomBrightnessContrast,
    Op::HueSaturationValue, Op::RandomGamma, Op::RGBShift, Op::GaussianBlur,
    Op::MotionBlur, Op::Downscale, Op::ToGray, Op::ChannelShuffle,
    Op::ColorJitter, Op::Sharpen, Op::Emboss, Op::GaussNoise,
    Op::RandomResizedCrop, Op::CoarseDropout};

}  // namespace

TEST_CASE("inverse_quantile") {
  const std::vector<Real> x{1.0, 3.0, 2.0};
  const auto f = inverse_quantile(x);
  CHECK(f[0] == doctest::Approx(2.0 / 3));
  CHECK(f[1] == 0.0);
  CHECK(f[2] == doctest::Approx(1.0 / 3));

  const std::vector<Real> same(7, 0.4);
  for (auto v : inverse_quantile(same)) CHECK(v == 0.0);
  CHECK_THROWS_AS(inverse_quantile(std::vector<Real>{}), ArgumentError);
  CHECK_THROWS_AS(inverse_quantile(std::vector<Real>{1.0, std::nan("")}), ArgumentError);

  SUBCASE("bounded and nonincreasing in the loss") {
    RngStream rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + uniform_index(rng, 40);
      std::vector<Real> l(n);
      // few distinct values so ties are common
      for (auto& v : l) v = static_cast<Real>(uniform_index(rng, 6));
      const auto q = inverse_quantile(l);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(q[i] >= 0.0);
        CHECK(q[i] <= static_cast<Real>(n - 1) / static_cast<Real>(n));
        for (std::size_t j = 0; j < n; ++j)
          if (l[i] > l[j]) CHECK(q[i] <= q[j]);
      }
    }
  }
}

TEST_CASE("intensity_counts") {
  const std::vector<Real> x{1.0, 3.0, 2.0};
  const auto plan = intensity_counts(x, 8);
  CHECK(plan.counts == std::vector<int>{6, 0, 3});
  CHECK(plan.max_level == 8);
  CHECK(intensity_counts(x, 0).counts == std::vector<int>{0, 0, 0});
  CHECK(intensity_counts(std::vector<Real>{5.0}, 8).counts == std::vector<int>{0});
  CHECK_THROWS_AS(intensity_counts(x, -1), ArgumentError);

  SUBCASE("matches the brute-force oracle") {
    RngStream rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + uniform_index(rng, 64);
      const int m = static_cast<int>(uniform_index(rng, 12));
      std::vector<Real> l(n);
      for (auto& v : l) v = trial % 2 ? uniform(rng, 0, 5) : static_cast<Real>(uniform_index(rng, 4));
      const auto p = intensity_counts(l, m);
      CHECK(p.counts == oracle::intensity_counts(l, m));
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(p.counts[i] >= 0);
        CHECK(p.counts[i] <= m);
      }
    }
  }
  SUBCASE("lowest loss in a tie-free batch") {
    const std::vector<Real> l{0.5, 0.1, 0.9, 0.7};
    CHECK(intensity_counts(l, 8).counts[1] == 6);  // ceil(8 * 3/4)
  }
}

TEST_CASE("progressive_max") {
  CHECK(progressive_max({25, 50, 8}) == 4);
  CHECK(progressive_max({1, 50, 8}) == 0);
  CHECK(progressive_max({50, 50, 8}) == 8);
  CHECK(progressive_max({1, 2, 1}) == 1);  // 0.5 rounds up
  CHECK(progressive_max({3, 10, 5}) == 2);  // 1.5 rounds up
  CHECK(progressive_max({7, 7, 0}) == 0);
  for (int t = 1; t < 50; ++t) CHECK(progressive_max({t, 50, 8}) <= progressive_max({t + 1, 50, 8}));
  CHECK_THROWS_AS(progressive_max({0, 50, 8}), ArgumentError);
  CHECK_THROWS_AS(progressive_max({51, 50, 8}), ArgumentError);
  CHECK_THROWS_AS(progressive_max({1, 50, -1}), ArgumentError);
}

TEST_CASE("catalog layout") {
  const TransformCatalog cat;
  CHECK(cat.slot(0) == std::vector<Op>{Op::HorizontalFlip, Op::VerticalFlip, Op::ShiftScaleRotate});
  CHECK(cat.slot(1) == std::vector<Op>{Op::RandomBrightnessContrast});
  CHECK(cat.slot(2) == std::vector<Op>{Op::HueSaturationValue, Op::RandomGamma, Op::RGBShift});
  CHECK(cat.slot(3) == std::vector<Op>{Op::GaussianBlur, Op::MotionBlur, Op::Downscale});
  CHECK(cat.slot(4) == std::vector<Op>{Op::ToGray, Op::ChannelShuffle, Op::ColorJitter});
  CHECK(cat.slot(5) == std::vector<Op>{Op::Sharpen, Op::Emboss, Op::GaussNoise});
  CHECK(cat.slot(6) == std::vector<Op>{Op::RandomResizedCrop});
  CHECK(cat.slot(7) == std::vector<Op>{Op::CoarseDropout});
  CHECK_THROWS(cat.slot(8));

  // default ranges
  const auto& p = cat.params();
  CHECK(p.shift_scale_rotate.shift_limit == 0.0625);
  CHECK(p.shift_scale_rotate.scale_limit == 0.1);
  CHECK(p.shift_scale_rotate.rotate_limit == 0.1);
  CHECK(p.brightness_contrast.brightness_limit == 0.2);
  CHECK(p.hue_saturation_value.sat_shift_limit == 30);
  CHECK(p.random_gamma.gamma_limit == Range{80, 120});
  CHECK(p.gaussian_blur.blur_limit == std::pair<int, int>{3, 7});
  CHECK(p.gauss_noise.var_limit == Range{10, 50});
  CHECK(p.random_resized_crop.scale == Range{0.5, 1.0});
  CHECK(p.coarse_dropout.max_height == 0.3);

  TransformParams bad;
  bad.random_resized_crop.scale = {0.9, 0.5};
  CHECK_THROWS_AS(TransformCatalog{bad}, ArgumentError);
}

TEST_CASE("every elementary op keeps shape and range") {
  const TransformParams params;
  for (auto shape : {Shape{3, 8, 8}, Shape{1, 5, 7}, Shape{3, 2, 2}, Shape{4, 6, 3}}) {
    const auto img = random_image(shape[0], shape[1], shape[2], 3);
    for (auto op : kAllOps) {
      for (std::uint64_t s = 0; s < 5; ++s) {
        RngStream a(s), b(s);
        const auto out = apply_op(img, op, params, a);
        CAPTURE(op_name(op));
        CHECK(out.shape() == img.shape());
        CHECK(in_unit_range(out));
        CHECK(out == apply_op(img, op, params, b));
      }
    }
  }
}

TEST_CASE("elementary op spot checks") {
  const TransformParams params;
  RngStream rng(0);
  const TensorBuf img({1, 2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  CHECK(apply_op(img, Op::HorizontalFlip, params, rng).values() == std::vector<Real>{0.3, 0.2, 0.1, 0.6, 0.5, 0.4});
  CHECK(apply_op(img, Op::VerticalFlip, params, rng).values() == std::vector<Real>{0.4, 0.5, 0.6, 0.1, 0.2, 0.3});

  // constant images survive blurs and resampling unchanged
  const TensorBuf flat({3, 6, 6}, std::vector<Real>(108, 0.25));
  for (auto op : {Op::GaussianBlur, Op::MotionBlur, Op::Downscale, Op::RandomResizedCrop}) {
    const auto out = apply_op(flat, op, params, rng);
    for (auto v : out.values()) CHECK(v == doctest::Approx(0.25));
  }

  // ToGray leaves three equal channels
  const auto g = apply_op(random_image(3, 4, 4, 9), Op::ToGray, params, rng);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(g[i] == doctest::Approx(g[16 + i]));
    CHECK(g[i] == doctest::Approx(g[32 + i]));
  }

  // ChannelShuffle permutes whole planes
  const auto src = random_image(3, 4, 4, 10);
  const auto sh = apply_op(src, Op::ChannelShuffle, params, rng);
  auto planes = [](const TensorBuf& t) {
    std::vector<std::vector<Real>> p;
    for (std::size_t c = 0; c < 3; ++c) p.emplace_back(t.values().begin() + 16 * c, t.values().begin() + 16 * (c + 1));
    std::sort(p.begin(), p.end());
    return p;
  };
  CHECK(planes(sh) == planes(src));

  // CoarseDropout zeroes a round(0.3 * side) square on a 10 x 10 image
  const TensorBuf ones({1, 10, 10}, std::vector<Real>(100, 1.0));
  const auto d = apply_op(ones, Op::CoarseDropout, params, rng);
  CHECK(std::count(d.values().begin(), d.values().end(), 0.0) == 9);
}

TEST_CASE("apply_pipeline") {
  const TransformCatalog cat;
  const auto img = random_image(3, 8, 8, 21);

  RngStream r0(1);
  CHECK(apply_pipeline(img, 0, cat, r0) == img);
  CHECK(apply_pipeline(img, -3, cat, r0) == img);

  RngStream a(7), b(7);
  const auto x = apply_pipeline(img, 8, cat, a);
  CHECK(x == apply_pipeline(img, 8, cat, b));
  CHECK(x.shape() == img.shape());
  CHECK(in_unit_range(x));

  // m beyond the catalog is capped at 8
  RngStream c(7), d(7);
  std::vector<Op> ops8, ops20;
  (void)apply_pipeline(img, 8, cat, c, &ops8);
  (void)apply_pipeline(img, 20, cat, d, &ops20);
  CHECK(ops8 == ops20);
  CHECK(ops8.size() == 8);

  SUBCASE("slot lists are nested prefixes") {
    for (int m1 = 0; m1 <= 10; ++m1)
      for (int m2 = m1; m2 <= 10; ++m2) {
        const auto s1 = pipeline_slots(m1), s2 = pipeline_slots(m2);
        REQUIRE(s1.size() <= s2.size());
        CHECK(std::equal(s1.begin(), s1.end(), s2.begin()));
      }
    CHECK(pipeline_slots(3) == std::vector<std::size_t>{0, 1, 2});
    CHECK(pipeline_slots(12).size() == 8);
  }
  SUBCASE("applied ops come from their slots in order") {
    for (std::uint64_t s = 0; s < 30; ++s) {
      RngStream rng(s);
      std::vector<Op> ops;
      (void)apply_pipeline(img, 8, cat, rng, &ops);
      for (std::size_t k = 0; k < ops.size(); ++k) {
        const auto& alts = cat.slot(k);
        CHECK(std::find(alts.begin(), alts.end(), ops[k]) != alts.end());
      }
    }
  }
  SUBCASE("every alternative is reachable") {
    std::vector<Op> seen;
    for (std::uint64_t s = 0; s < 200; ++s) {
      RngStream rng(s);
      (void)apply_pipeline(img, 8, cat, rng, &seen);
    }
    for (auto op : kAllOps) CHECK(std::find(seen.begin(), seen.end(), op) != seen.end());
  }
}

TEST_CASE("cutout") {
  const auto img = random_image(3, 16, 16, 2);
  RngStream rng(3);
  CHECK(cutout(img, 0.0, rng) == img);
  const auto all = cutout(img, 1.0, rng);
  CHECK(std::all_of(all.values().begin(), all.values().end(), [](Real v) { return v == 0.0; }));

  const TensorBuf ones({2, 16, 16}, std::vector<Real>(512, 1.0));
  for (std::uint64_t s = 0; s < 20; ++s) {
    RngStream r(s);
    const auto out = cutout(ones, 0.25, r);
    // 8 x 8 block in each of the two channels
    CHECK(std::count(out.values().begin(), out.values().end(), 0.0) == 128);
    // the zeroed pixels form one square shared by both channels
    std::size_t ymin = 16, ymax = 0, xmin = 16, xmax = 0;
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x)
        if (out[y * 16 + x] == 0.0) {
          CHECK(out[256 + y * 16 + x] == 0.0);
          ymin = std::min(ymin, y), ymax = std::max(ymax, y), xmin = std::min(xmin, x), xmax = std::max(xmax, x);
        }
    CHECK(ymax - ymin == 7);
    CHECK(xmax - xmin == 7);
  }
  CHECK_THROWS_AS(cutout(img, 1.5, rng), ArgumentError);
  CHECK_THROWS_AS(cutout(img, -0.1, rng), ArgumentError);
}
