#include "tofu/transforms/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace tofu::transforms {

namespace {

struct Image {
  std::size_t c, h, w;
  std::vector<Real> v;

  Real& at(std::size_t ch, std::size_t y, std::size_t x) { return v[(ch * h + y) * w + x]; }
  Real at(std::size_t ch, std::size_t y, std::size_t x) const { return v[(ch * h + y) * w + x]; }

  // Clamp-to-edge lookup for signed coordinates.
  Real edge(std::size_t ch, long y, long x) const {
    y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    return at(ch, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  }

  Real bilinear(std::size_t ch, Real y, Real x) const {
    const Real fy = std::floor(y), fx = std::floor(x);
    const Real ay = y - fy, ax = x - fx;
    const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
    return (1 - ay) * ((1 - ax) * edge(ch, y0, x0) + ax * edge(ch, y0, x0 + 1)) +
           ay * ((1 - ax) * edge(ch, y0 + 1, x0) + ax * edge(ch, y0 + 1, x0 + 1));
  }
};

Image to_image(const nn::TensorBuf& t) {
  if (t.rank() != 3) throw ShapeError("transforms expect a (C, H, W) image, got " + shape_to_string(t.shape()));
  if (t.size() == 0) throw ShapeError("transforms: empty image");
  return {t.dim(0), t.dim(1), t.dim(2), t.values()};
}

nn::TensorBuf to_tensor(Image img) {
  for (auto& x : img.v) x = std::clamp(x, 0.0, 1.0);
  return nn::TensorBuf({img.c, img.h, img.w}, std::move(img.v));
}

// Resample the box [y0, y0+bh) x [x0, x0+bw) of src onto an oh x ow grid
// with half-pixel centers.
Image resize_region(const Image& src, Real y0, Real x0, Real bh, Real bw, std::size_t oh, std::size_t ow) {
  Image out{src.c, oh, ow, std::vector<Real>(src.c * oh * ow)};
  for (std::size_t ch = 0; ch < src.c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        const Real sy = y0 + (static_cast<Real>(y) + 0.5) * bh / static_cast<Real>(oh) - 0.5;
        const Real sx = x0 + (static_cast<Real>(x) + 0.5) * bw / static_cast<Real>(ow) - 0.5;
        out.at(ch, y, x) = src.bilinear(ch, sy, sx);
      }
  return out;
}

Image resize(const Image& src, std::size_t oh, std::size_t ow) {
  return resize_region(src, 0, 0, static_cast<Real>(src.h), static_cast<Real>(src.w), oh, ow);
}

// Per-channel 2-D correlation, clamp-to-edge border. k is kh x kw row-major.
Image convolve(const Image& src, const std::vector<Real>& k, std::size_t kh, std::size_t kw) {
  Image out = src;
  const long rh = static_cast<long>(kh / 2), rw = static_cast<long>(kw / 2);
  for (std::size_t ch = 0; ch < src.c; ++ch)
    for (std::size_t y = 0; y < src.h; ++y)
      for (std::size_t x = 0; x < src.w; ++x) {
        Real acc = 0;
        for (long dy = -rh; dy <= rh; ++dy)
          for (long dx = -rw; dx <= rw; ++dx)
            acc += k[static_cast<std::size_t>((dy + rh) * static_cast<long>(kw) + dx + rw)] *
                   src.edge(ch, static_cast<long>(y) + dy, static_cast<long>(x) + dx);
        out.at(ch, y, x) = acc;
      }
  return out;
}

Real luminance(const Image& img, std::size_t y, std::size_t x) {
  return 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
}

// Odd kernel size drawn uniformly from the odd values in [lo, hi].
std::size_t odd_kernel(RngStream& rng, int lo, int hi) {
  lo = std::max(3, lo | 1);
  hi = std::max(lo, hi);
  if (hi % 2 == 0) --hi;
  const auto choices = static_cast<std::size_t>((hi - lo) / 2 + 1);
  return static_cast<std::size_t>(lo) + 2 * uniform_index(rng, choices);
}

void rgb_to_hsv(Real r, Real g, Real b, Real& h, Real& s, Real& v) {
  const Real mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0;
  if (d <= 0) {
    h = 0;
  } else if (mx == r) {
    h = 60 * std::fmod((g - b) / d + 6, 6.0);
  } else if (mx == g) {
    h = 60 * ((b - r) / d + 2);
  } else {
    h = 60 * ((r - g) / d + 4);
  }
}

void hsv_to_rgb(Real h, Real s, Real v, Real& r, Real& g, Real& b) {
  const Real c = v * s;
  const Real hp = h / 60;
  const Real x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  Real r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r1 = c, g1 = x; break;
    case 1: r1 = x, g1 = c; break;
    case 2: g1 = c, b1 = x; break;
    case 3: g1 = x, b1 = c; break;
    case 4: r1 = x, b1 = c; break;
    default: r1 = c, b1 = x; break;
  }
  const Real m = v - c;
  r = r1 + m, g = g1 + m, b = b1 + m;
}

Image shift_scale_rotate(const Image& img, const TransformParams& p, RngStream& rng) {
  const auto& q = p.shift_scale_rotate;
  const Real dx = uniform(rng, -q.shift_limit, q.shift_limit) * static_cast<Real>(img.w);
  const Real dy = uniform(rng, -q.shift_limit, q.shift_limit) * static_cast<Real>(img.h);
  const Real scale = uniform(rng, 1 - q.scale_limit, 1 + q.scale_limit);
  const Real angle = uniform(rng, -q.rotate_limit, q.rotate_limit) * std::numbers::pi / 180;
  const Real cy = (static_cast<Real>(img.h) - 1) / 2, cx = (static_cast<Real>(img.w) - 1) / 2;
  const Real cs = std::cos(angle), sn = std::sin(angle);
  Image out = img;
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x) {
      // inverse map: undo shift, rotate back, unscale
      const Real u = static_cast<Real>(x) - cx - dx, v = static_cast<Real>(y) - cy - dy;
      const Real sx = (cs * u + sn * v) / scale + cx;
      const Real sy = (-sn * u + cs * v) / scale + cy;
      for (std::size_t ch = 0; ch < img.c; ++ch) out.at(ch, y, x) = img.bilinear(ch, sy, sx);
    }
  return out;
}

Image brightness_contrast(Image img, const TransformParams& p, RngStream& rng) {
  const auto& q = p.brightness_contrast;
  const Real alpha = 1 + uniform(rng, -q.contrast_limit, q.contrast_limit);
  const Real beta = uniform(rng, -q.brightness_limit, q.brightness_limit);
  for (auto& x : img.v) x = alpha * x + beta;
  return img;
}

Image hue_saturation_value(Image img, const TransformParams& p, RngStream& rng) {
  const auto& q = p.hue_saturation_value;
  const Real dh = uniform(rng, -q.hue_shift_limit, q.hue_shift_limit);
  const Real ds = uniform(rng, -q.sat_shift_limit, q.sat_shift_limit) / 255;
  const Real dv = uniform(rng, -q.val_shift_limit, q.val_shift_limit) / 255;
  if (img.c != 3) {
    for (auto& x : img.v) x += dv;
    return img;
  }
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x) {
      Real h, s, v;
      rgb_to_hsv(std::clamp(img.at(0, y, x), 0.0, 1.0), std::clamp(img.at(1, y, x), 0.0, 1.0),
                 std::clamp(img.at(2, y, x), 0.0, 1.0), h, s, v);
      h = std::fmod(h + dh + 360, 360.0);
      s = std::clamp(s + ds, 0.0, 1.0);
      v = std::clamp(v + dv, 0.0, 1.0);
      hsv_to_rgb(h, s, v, img.at(0, y, x), img.at(1, y, x), img.at(2, y, x));
    }
  return img;
}

Image random_gamma(Image img, const TransformParams& p, RngStream& rng) {
  const auto [lo, hi] = p.random_gamma.gamma_limit;
  const Real g = uniform(rng, lo, hi) / 100;
  for (auto& x : img.v) x = std::pow(std::clamp(x, 0.0, 1.0), g);
  return img;
}

Image rgb_shift(Image img, const TransformParams& p, RngStream& rng) {
  const Real lim = p.rgb_shift.shift_limit;
  const std::size_t plane = img.h * img.w;
  for (std::size_t ch = 0; ch < img.c; ++ch) {
    const Real d = uniform(rng, -lim, lim) / 255;
    for (std::size_t i = 0; i < plane; ++i) img.v[ch * plane + i] += d;
  }
  return img;
}

Image gaussian_blur(const Image& img, const TransformParams& p, RngStream& rng) {
  const auto k = odd_kernel(rng, p.gaussian_blur.blur_limit.first, p.gaussian_blur.blur_limit.second);
  // sigma from kernel size, as OpenCV does for sigma = 0
  const Real sigma = 0.3 * ((static_cast<Real>(k) - 1) * 0.5 - 1) + 0.8;
  std::vector<Real> g(k);
  const Real r = static_cast<Real>(k / 2);
  for (std::size_t i = 0; i < k; ++i) {
    const Real d = static_cast<Real>(i) - r;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
  }
  const Real sum = std::accumulate(g.begin(), g.end(), 0.0);
  for (auto& x : g) x /= sum;
  return convolve(convolve(img, g, 1, k), g, k, 1);
}

Image motion_blur(const Image& img, const TransformParams& p, RngStream& rng) {
  const auto k = odd_kernel(rng, 3, p.motion_blur.blur_limit);
  const auto direction = uniform_index(rng, 4);  // -, |, \, /
  std::vector<Real> kern(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t y = k / 2, x = k / 2;
    switch (direction) {
      case 0: x = i; break;
      case 1: y = i; break;
      case 2: y = i, x = i; break;
      default: y = i, x = k - 1 - i; break;
    }
    kern[y * k + x] = 1.0 / static_cast<Real>(k);
  }
  return convolve(img, kern, k, k);
}

Image downscale(const Image& img, const TransformParams& p, RngStream& rng) {
  const Real s = uniform(rng, p.downscale.scale_min, p.downscale.scale_max);
  const auto dh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<Real>(img.h) * s)));
  const auto dw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<Real>(img.w) * s)));
  return resize(resize(img, dh, dw), img.h, img.w);
}

Image to_gray(Image img) {
  if (img.c != 3) return img;
  for (std::size_t y = 0; y < img.h; ++y)
    for (std::size_t x = 0; x < img.w; ++x) {
      const Real l = luminance(img, y, x);
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(ch, y, x) = l;
    }
  return img;
}

Image channel_shuffle(const Image& img, RngStream& rng) {
  std::vector<std::size_t> perm(img.c);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  Image out = img;
  const std::size_t plane = img.h * img.w;
  for (std::size_t ch = 0; ch < img.c; ++ch)
    std::copy_n(img.v.begin() + static_cast<long>(perm[ch] * plane), plane, out.v.begin() + static_cast<long>(ch * plane));
  return out;
}

Image color_jitter(Image img, const TransformParams& p, RngStream& rng) {
  const auto& q = p.color_jitter;
  const Real b = uniform(rng, std::max(0.0, 1 - q.brightness), 1 + q.brightness);
  const Real c = uniform(rng, std::max(0.0, 1 - q.contrast), 1 + q.contrast);
  const Real s = uniform(rng, std::max(0.0, 1 - q.saturation), 1 + q.saturation);
  for (auto& x : img.v) x = std::clamp(x * b, 0.0, 1.0);

  Real mean = 0;
  if (img.c == 3) {
    for (std::size_t y = 0; y < img.h; ++y)
      for (std::size_t x = 0; x < img.w; ++x) mean += luminance(img, y, x);
    mean /= static_cast<Real>(img.h * img.w);
  } else {
    mean = std::accumulate(img.v.begin(), img.v.end(), 0.0) / static_cast<Real>(img.v.size());
  }
  for (auto& x : img.v) x = std::clamp((x - mean) * c + mean, 0.0, 1.0);

  if (img.c == 3) {
    for (std::size_t y = 0; y < img.h; ++y)
      for (std::size_t x = 0; x < img.w; ++x) {
        const Real l = luminance(img, y, x);
        for (std::size_t ch = 0; ch < 3; ++ch) img.at(ch, y, x) = (img.at(ch, y, x) - l) * s + l;
      }
  }
  return img;
}

Image sharpen(const Image& img, const TransformParams& p, RngStream& rng) {
  const Real alpha = uniform(rng, p.sharpen.alpha.first, p.sharpen.alpha.second);
  const Real light = uniform(rng, p.sharpen.lightness.first, p.sharpen.lightness.second);
  std::vector<Real> k(9, -alpha);
  k[4] = (1 - alpha) + alpha * (8 + light);
  return convolve(img, k, 3, 3);
}

Image emboss(const Image& img, const TransformParams& p, RngStream& rng) {
  const Real alpha = uniform(rng, p.emboss.alpha.first, p.emboss.alpha.second);
  const Real s = uniform(rng, p.emboss.strength.first, p.emboss.strength.second);
  const std::vector<Real> e{-1 - s, -s, 0, -s, 1, s, 0, s, 1 + s};
  std::vector<Real> k(9);
  for (std::size_t i = 0; i < 9; ++i) k[i] = alpha * e[i] + (i == 4 ? 1 - alpha : 0.0);
  return convolve(img, k, 3, 3);
}

Image gauss_noise(Image img, const TransformParams& p, RngStream& rng) {
  const Real var = uniform(rng, p.gauss_noise.var_limit.first, p.gauss_noise.var_limit.second);
  const Real sigma = std::sqrt(var) / 255;
  for (auto& x : img.v) x += sigma * standard_normal(rng);
  return img;
}

Image random_resized_crop(const Image& img, const TransformParams& p, RngStream& rng) {
  const auto& q = p.random_resized_crop;
  const Real area = static_cast<Real>(img.h * img.w);
  const Real log_lo = std::log(q.ratio.first), log_hi = std::log(q.ratio.second);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const Real target = area * uniform(rng, q.scale.first, q.scale.second);
    const Real ratio = std::exp(uniform(rng, log_lo, log_hi));
    const auto cw = std::lround(std::sqrt(target * ratio));
    const auto ch = std::lround(std::sqrt(target / ratio));
    if (cw >= 1 && ch >= 1 && static_cast<std::size_t>(cw) <= img.w && static_cast<std::size_t>(ch) <= img.h) {
      const auto y0 = uniform_index(rng, img.h - static_cast<std::size_t>(ch) + 1);
      const auto x0 = uniform_index(rng, img.w - static_cast<std::size_t>(cw) + 1);
      return resize_region(img, static_cast<Real>(y0), static_cast<Real>(x0), static_cast<Real>(ch),
                           static_cast<Real>(cw), img.h, img.w);
    }
  }
  return img;
}

// Fractional sizes are relative to the image side; values >= 1 are pixels.
std::size_t hole_extent(Real spec, std::size_t side) {
  const Real px = spec < 1 ? spec * static_cast<Real>(side) : spec;
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(px)), 1, side);
}

Image coarse_dropout(Image img, const TransformParams& p, RngStream& rng) {
  const auto& q = p.coarse_dropout;
  const auto hh = hole_extent(q.max_height, img.h), hw = hole_extent(q.max_width, img.w);
  for (int hole = 0; hole < q.max_holes; ++hole) {
    const auto y0 = uniform_index(rng, img.h - hh + 1);
    const auto x0 = uniform_index(rng, img.w - hw + 1);
    for (std::size_t ch = 0; ch < img.c; ++ch)
      for (std::size_t y = y0; y < y0 + hh; ++y)
        for (std::size_t x = x0; x < x0 + hw; ++x) img.at(ch, y, x) = 0;
  }
  return img;
}

void require_range(const Range& r, Real lo, Real hi, const char* name) {
  if (!(r.first <= r.second) || r.first < lo || r.second > hi)
    throw ArgumentError(std::string("transform parameter ") + name + " must be an ordered range inside [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

void require_nonneg(Real v, const char* name) {
  if (!(v >= 0) || !std::isfinite(v))
    throw ArgumentError(std::string("transform parameter ") + name + " must be finite and >= 0");
}

}  // namespace

std::string op_name(Op op) {
  switch (op) {
    case Op::HorizontalFlip: return "HorizontalFlip";
    case Op::VerticalFlip: return "VerticalFlip";
    case Op::ShiftScaleRotate: return "ShiftScaleRotate";
    case Op::RandomBrightnessContrast: return "RandomBrightnessContrast";
    case Op::HueSaturationValue: return "HueSaturationValue";
    case Op::RandomGamma: return "RandomGamma";
    case Op::RGBShift: return "RGBShift";
    case Op::GaussianBlur: return "GaussianBlur";
    case Op::MotionBlur: return "MotionBlur";
    case Op::Downscale: return "Downscale";
    case Op::ToGray: return "ToGray";
    case Op::ChannelShuffle: return "ChannelShuffle";
    case Op::ColorJitter: return "ColorJitter";
    case Op::Sharpen: return "Sharpen";
    case Op::Emboss: return "Emboss";
    case Op::GaussNoise: return "GaussNoise";
    case Op::RandomResizedCrop: return "RandomResizedCrop";
    case Op::CoarseDropout: return "CoarseDropout";
  }
  return "?";
}

void validate(const TransformParams& p) {
  require_nonneg(p.shift_scale_rotate.shift_limit, "shift_scale_rotate.shift_limit");
  require_range({0, p.shift_scale_rotate.scale_limit}, 0, 0.999, "shift_scale_rotate.scale_limit");
  require_nonneg(p.shift_scale_rotate.rotate_limit, "shift_scale_rotate.rotate_limit");
  require_nonneg(p.brightness_contrast.brightness_limit, "brightness_limit");
  require_nonneg(p.brightness_contrast.contrast_limit, "contrast_limit");
  require_nonneg(p.hue_saturation_value.hue_shift_limit, "hue_shift_limit");
  require_nonneg(p.hue_saturation_value.sat_shift_limit, "sat_shift_limit");
  require_nonneg(p.hue_saturation_value.val_shift_limit, "val_shift_limit");
  require_range(p.random_gamma.gamma_limit, 1e-6, 1e6, "gamma_limit");
  require_nonneg(p.rgb_shift.shift_limit, "rgb_shift.shift_limit");
  const auto [blo, bhi] = p.gaussian_blur.blur_limit;
  if (blo < 3 || bhi < blo) throw ArgumentError("gaussian_blur.blur_limit must satisfy 3 <= lo <= hi");
  if (p.motion_blur.blur_limit < 3) throw ArgumentError("motion_blur.blur_limit must be >= 3");
  require_range({p.downscale.scale_min, p.downscale.scale_max}, 1e-6, 1.0, "downscale.scale_min/scale_max");
  require_nonneg(p.color_jitter.brightness, "color_jitter.brightness");
  require_nonneg(p.color_jitter.contrast, "color_jitter.contrast");
  require_nonneg(p.color_jitter.saturation, "color_jitter.saturation");
  require_range(p.sharpen.alpha, 0, 1, "sharpen.alpha");
  require_range(p.sharpen.lightness, 0, 1e6, "sharpen.lightness");
  require_range(p.emboss.alpha, 0, 1, "emboss.alpha");
  require_range(p.emboss.strength, 0, 1e6, "emboss.strength");
  require_range(p.gauss_noise.var_limit, 0, 1e12, "gauss_noise.var_limit");
  require_range(p.random_resized_crop.scale, 1e-6, 1, "random_resized_crop.scale");
  require_range(p.random_resized_crop.ratio, 1e-6, 1e6, "random_resized_crop.ratio");
  if (p.coarse_dropout.max_holes < 0) throw ArgumentError("coarse_dropout.max_holes must be >= 0");
  require_nonneg(p.coarse_dropout.max_height, "coarse_dropout.max_height");
  require_nonneg(p.coarse_dropout.max_width, "coarse_dropout.max_width");
}

TransformCatalog::TransformCatalog(TransformParams params) : params_(params) {
  validate(params_);
  slots_ = {{
      {Op::HorizontalFlip, Op::VerticalFlip, Op::ShiftScaleRotate},
      {Op::RandomBrightnessContrast},
      {Op::HueSaturationValue, Op::RandomGamma, Op::RGBShift},
      {Op::GaussianBlur, Op::MotionBlur, Op::Downscale},
      {Op::ToGray, Op::ChannelShuffle, Op::ColorJitter},
      {Op::Sharpen, Op::Emboss, Op::GaussNoise},
      {Op::RandomResizedCrop},
      {Op::CoarseDropout},
  }};
}

nn::TensorBuf apply_op(const nn::TensorBuf& image, Op op, const TransformParams& p, RngStream& rng) {
  Image img = to_image(image);
  switch (op) {
    case Op::HorizontalFlip: {
      Image out = img;
      for (std::size_t ch = 0; ch < img.c; ++ch)
        for (std::size_t y = 0; y < img.h; ++y)
          for (std::size_t x = 0; x < img.w; ++x) out.at(ch, y, x) = img.at(ch, y, img.w - 1 - x);
      return to_tensor(std::move(out));
    }
    case Op::VerticalFlip: {
      Image out = img;
      for (std::size_t ch = 0; ch < img.c; ++ch)
        for (std::size_t y = 0; y < img.h; ++y)
          for (std::size_t x = 0; x < img.w; ++x) out.at(ch, y, x) = img.at(ch, img.h - 1 - y, x);
      return to_tensor(std::move(out));
    }
    case Op::ShiftScaleRotate: return to_tensor(shift_scale_rotate(img, p, rng));
    case Op::RandomBrightnessContrast: return to_tensor(brightness_contrast(std::move(img), p, rng));
    case Op::HueSaturationValue: return to_tensor(hue_saturation_value(std::move(img), p, rng));
    case Op::RandomGamma: return to_tensor(random_gamma(std::move(img), p, rng));
    case Op::RGBShift: return to_tensor(rgb_shift(std::move(img), p, rng));
    case Op::GaussianBlur: return to_tensor(gaussian_blur(img, p, rng));
    case Op::MotionBlur: return to_tensor(motion_blur(img, p, rng));
    case Op::Downscale: return to_tensor(downscale(img, p, rng));
    case Op::ToGray: return to_tensor(to_gray(std::move(img)));
    case Op::ChannelShuffle: return to_tensor(channel_shuffle(img, rng));
    case Op::ColorJitter: return to_tensor(color_jitter(std::move(img), p, rng));
    case Op::Sharpen: return to_tensor(sharpen(img, p, rng));
    case Op::Emboss: return to_tensor(emboss(img, p, rng));
    case Op::GaussNoise: return to_tensor(gauss_noise(std::move(img), p, rng));
    case Op::RandomResizedCrop: return to_tensor(random_resized_crop(img, p, rng));
    case Op::CoarseDropout: return to_tensor(coarse_dropout(std::move(img), p, rng));
  }
  throw ArgumentError("apply_op: unknown op");
}

std::vector<std::size_t> pipeline_slots(int m) {
  const auto n = static_cast<std::size_t>(std::clamp(m, 0, static_cast<int>(kNumSlots)));
  std::vector<std::size_t> slots(n);
  std::iota(slots.begin(), slots.end(), 0);
  return slots;
}

nn::TensorBuf apply_pipeline(const nn::TensorBuf& image, int m, const TransformCatalog& catalog, RngStream& rng,
                             std::vector<Op>* applied) {
  if (image.rank() != 3) throw ShapeError("apply_pipeline expects a (C, H, W) image");
  nn::TensorBuf out = image;
  for (auto s : pipeline_slots(m)) {
    const auto& alts = catalog.slot(s);
    const Op op = alts.size() == 1 ? alts.front() : alts[uniform_index(rng, alts.size())];
    if (applied) applied->push_back(op);
    out = apply_op(out, op, catalog.params(), rng);
  }
  return out;
}

nn::TensorBuf cutout(const nn::TensorBuf& image, Real ratio, RngStream& rng) {
  if (!(ratio >= 0 && ratio <= 1)) throw ArgumentError("cutout: ratio must be in [0, 1]");
  Image img = to_image(image);
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(ratio * static_cast<Real>(img.h * img.w))));
  if (side == 0) return image;
  if (ratio == 1) return nn::TensorBuf(image.shape());
  const auto sh = std::min(side, img.h), sw = std::min(side, img.w);
  const auto y0 = uniform_index(rng, img.h - sh + 1);
  const auto x0 = uniform_index(rng, img.w - sw + 1);
  for (std::size_t ch = 0; ch < img.c; ++ch)
    for (std::size_t y = y0; y < y0 + sh; ++y)
      for (std::size_t x = x0; x < x0 + sw; ++x) img.at(ch, y, x) = 0;
  return to_tensor(std::move(img));
}

}  // namespace tofu::transforms
