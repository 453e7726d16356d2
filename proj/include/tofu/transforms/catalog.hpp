#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "tofu/common.hpp"
#include "tofu/nn/tensor.hpp"

namespace tofu::transforms {

enum class Op {
  HorizontalFlip,
  VerticalFlip,
  ShiftScaleRotate,
  RandomBrightnessContrast,
  HueSaturationValue,
  RandomGamma,
  RGBShift,
  GaussianBlur,
  MotionBlur,
  Downscale,
  ToGray,
  ChannelShuffle,
  ColorJitter,
  Sharpen,
  Emboss,
  GaussNoise,
  RandomResizedCrop,
  CoarseDropout,
};

std::string op_name(Op op);

using Range = std::pair<Real, Real>;

// Pixel-valued limits (hue, sat, val, rgb shift, noise variance) are in
// 8-bit units and rescaled by 1/255 for [0,1] images. Hue is in degrees.
struct TransformParams {
  struct {
    Real shift_limit = 0.0625;
    Real scale_limit = 0.1;
    Real rotate_limit = 0.1;
  } shift_scale_rotate;
  struct {
    Real brightness_limit = 0.2;
    Real contrast_limit = 0.2;
  } brightness_contrast;
  struct {
    Real hue_shift_limit = 20;
    Real sat_shift_limit = 30;
    Real val_shift_limit = 20;
  } hue_saturation_value;
  struct {
    Range gamma_limit{80, 120};
  } random_gamma;
  struct {
    Real shift_limit = 20;
  } rgb_shift;
  struct {
    std::pair<int, int> blur_limit{3, 7};
  } gaussian_blur;
  struct {
    int blur_limit = 7;
  } motion_blur;
  struct {
    Real scale_min = 0.25;
    Real scale_max = 0.25;
  } downscale;
  struct {
    Real brightness = 0.2;
    Real contrast = 0.2;
    Real saturation = 0.2;
  } color_jitter;
  struct {
    Range alpha{0.2, 0.5};
    Range lightness{0.5, 1.0};
  } sharpen;
  struct {
    Range alpha{0.2, 0.5};
    Range strength{0.2, 0.7};
  } emboss;
  struct {
    Range var_limit{10.0, 50.0};
  } gauss_noise;
  struct {
    Range scale{0.5, 1.0};
    Range ratio{0.75, 4.0 / 3.0};
  } random_resized_crop;
  struct {
    int max_holes = 1;
    Real max_height = 0.3;
    Real max_width = 0.3;
  } coarse_dropout;
};

// Checks every range is ordered and within the domain the op can use.
void validate(const TransformParams& p);

constexpr std::size_t kNumSlots = 8;

class TransformCatalog {
 public:
  explicit TransformCatalog(TransformParams params = {});

  const TransformParams& params() const { return params_; }
  // Alternatives for slot s (0-based); a single entry means no choice.
  const std::vector<Op>& slot(std::size_t s) const { return slots_.at(s); }

 private:
  TransformParams params_;
  std::array<std::vector<Op>, kNumSlots> slots_;
};

// One elementary op with parameters drawn from the catalog ranges.
// The image is (C, H, W) in [0, 1]; the result is clamped to [0, 1].
nn::TensorBuf apply_op(const nn::TensorBuf& image, Op op, const TransformParams& params, RngStream& rng);

// Applies slots 1..min(m, 8) in order. Each OneOf slot picks uniformly
// among its alternatives. If `applied` is given it receives the chosen ops.
nn::TensorBuf apply_pipeline(const nn::TensorBuf& image, int m, const TransformCatalog& catalog, RngStream& rng,
                             std::vector<Op>* applied = nullptr);

// Slot indices (0-based) that apply_pipeline runs for intensity m.
std::vector<std::size_t> pipeline_slots(int m);

// Zeroes one square of side round(sqrt(ratio * H * W)) across all channels.
// The square is clipped to the image and placed uniformly among the
// positions that keep as much of it inside as possible.
nn::TensorBuf cutout(const nn::TensorBuf& image, Real ratio, RngStream& rng);

}  // namespace tofu::transforms
