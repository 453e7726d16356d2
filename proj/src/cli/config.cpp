#include "tofu/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tofu::cli {

using json = nlohmann::json;

namespace {

template <class T>
T convert(const json& v, const std::string& where) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
    return v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(where + ": expected a nonnegative integer");
      return static_cast<T>(v.get<std::uint64_t>());
    } else {
      return static_cast<T>(v.get<std::int64_t>());
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    return v.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(where + ": expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_same_v<T, std::pair<Real, Real>> || std::is_same_v<T, std::pair<int, int>>) {
    if (!v.is_array() || v.size() != 2) throw ConfigError(where + ": expected a two-element array");
    return {convert<typename T::first_type>(v[0], where + "[0]"), convert<typename T::second_type>(v[1], where + "[1]")};
  } else {
    if (!v.is_array()) throw ConfigError(where + ": expected an array");
    T out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
    return out;
  }
}

// Reads keys from one object and remembers which ones were used.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }
  Section(const Section&) = delete;
  ~Section() = default;

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) out = convert<T>(*it, where(key));
  }

  template <class T>
  void get(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end() && !it->is_null()) out = convert<T>(*it, where(key));
  }

  const json& child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return it == j_.end() ? empty : *it;
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError("unknown key '" + where(k) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_data(const json& j, DataConfig& d) {
  Section s(j, "data");
  s.get("source", d.source);
  s.get("path", d.path);
  s.get("num_classes", d.num_classes);
  s.get("per_class", d.per_class);
  s.get("dim", d.dim);
  s.get("separation", d.separation);
  s.get("image_shape", d.image_shape);
  s.get("test_fraction", d.test_fraction);
  s.get("holdout_fraction", d.holdout_fraction);
  s.get("kappa", d.kappa);
  const json& f = s.child("forget");
  if (!f.is_object()) throw ConfigError("data.forget: expected an object of client index -> fraction");
  d.forget.clear();
  for (const auto& [k, v] : f.items()) {
    std::size_t idx = 0;
    const auto [end, ec] = std::from_chars(k.data(), k.data() + k.size(), idx);
    if (ec != std::errc{} || end != k.data() + k.size())
      throw ConfigError("data.forget: key '" + k + "' is not a client index");
    d.forget[idx] = convert<Real>(v, "data.forget." + k);
  }
  s.finish();
}

void read_model(const json& j, ModelConfig& m) {
  Section s(j, "model");
  s.get("arch", m.arch);
  s.get("hidden", m.hidden);
  s.finish();
}

void read_federation(const json& j, federation::FederationConfig& f) {
  Section s(j, "federation");
  s.get("num_clients", f.num_clients);
  s.get("rounds", f.rounds);
  s.get("local_epochs", f.local_epochs);
  s.get("batch_size", f.batch_size);
  s.get("lr", f.lr);
  s.get("momentum", f.momentum);
  s.get("gamma", f.gamma);
  s.get("max_intensity", f.max_intensity);
  s.get("progressive", f.progressive);
  s.get("participation", f.participation);
  s.get("threads", f.threads);
  s.finish();
}

template <class Fn>
void read_sub(Section& parent, const std::string& key, Fn&& fn) {
  Section s(parent.child(key), parent.where(key));
  fn(s);
  s.finish();
}

void read_transforms(const json& j, transforms::TransformParams& p) {
  Section s(j, "transforms");
  read_sub(s, "shift_scale_rotate", [&](Section& t) {
    t.get("shift_limit", p.shift_scale_rotate.shift_limit);
    t.get("scale_limit", p.shift_scale_rotate.scale_limit);
    t.get("rotate_limit", p.shift_scale_rotate.rotate_limit);
  });
  read_sub(s, "brightness_contrast", [&](Section& t) {
    t.get("brightness_limit", p.brightness_contrast.brightness_limit);
    t.get("contrast_limit", p.brightness_contrast.contrast_limit);
  });
  read_sub(s, "hue_saturation_value", [&](Section& t) {
    t.get("hue_shift_limit", p.hue_saturation_value.hue_shift_limit);
    t.get("sat_shift_limit", p.hue_saturation_value.sat_shift_limit);
    t.get("val_shift_limit", p.hue_saturation_value.val_shift_limit);
  });
  read_sub(s, "random_gamma", [&](Section& t) { t.get("gamma_limit", p.random_gamma.gamma_limit); });
  read_sub(s, "rgb_shift", [&](Section& t) { t.get("shift_limit", p.rgb_shift.shift_limit); });
  read_sub(s, "gaussian_blur", [&](Section& t) { t.get("blur_limit", p.gaussian_blur.blur_limit); });
  read_sub(s, "motion_blur", [&](Section& t) { t.get("blur_limit", p.motion_blur.blur_limit); });
  read_sub(s, "downscale", [&](Section& t) {
    t.get("scale_min", p.downscale.scale_min);
    t.get("scale_max", p.downscale.scale_max);
  });
  read_sub(s, "color_jitter", [&](Section& t) {
    t.get("brightness", p.color_jitter.brightness);
    t.get("contrast", p.color_jitter.contrast);
    t.get("saturation", p.color_jitter.saturation);
  });
  read_sub(s, "sharpen", [&](Section& t) {
    t.get("alpha", p.sharpen.alpha);
    t.get("lightness", p.sharpen.lightness);
  });
  read_sub(s, "emboss", [&](Section& t) {
    t.get("alpha", p.emboss.alpha);
    t.get("strength", p.emboss.strength);
  });
  read_sub(s, "gauss_noise", [&](Section& t) { t.get("var_limit", p.gauss_noise.var_limit); });
  read_sub(s, "random_resized_crop", [&](Section& t) {
    t.get("scale", p.random_resized_crop.scale);
    t.get("ratio", p.random_resized_crop.ratio);
  });
  read_sub(s, "coarse_dropout", [&](Section& t) {
    t.get("max_holes", p.coarse_dropout.max_holes);
    t.get("max_height", p.coarse_dropout.max_height);
    t.get("max_width", p.coarse_dropout.max_width);
  });
  s.finish();
}

void read_unlearning(const json& j, UnlearningConfig& u) {
  Section s(j, "unlearning");
  s.get("method", u.method);
  s.get("clients", u.request.clients);
  s.get("epochs", u.request.epochs);
  s.get("lr", u.request.lr);
  s.get("rounds", u.request.rounds);
  read_sub(s, "pgd", [&](Section& t) {
    t.get("radius", u.options.pgd.radius);
    t.get("steps", u.options.pgd.steps);
    t.get("loss_cap", u.options.pgd.loss_cap);
  });
  read_sub(s, "l1", [&](Section& t) {
    t.get("l1_weight", u.options.l1.l1_weight);
    t.get("prune_quantile", u.options.l1.prune_quantile);
  });
  s.finish();
}

void read_evaluation(const json& j, EvaluationConfig& e, federation::FederationConfig& f) {
  Section s(j, "evaluation");
  s.get("member_calibration", e.member_calibration);
  s.get("shadow_count", f.retain_checkpoints);
  s.get("sweep_mode", e.sweep_mode);
  s.get("cutout_step", e.cutout_step);
  s.get("rmd", e.rmd);
  s.finish();
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Section top(j, "");
  read_data(top.child("data"), cfg.data);
  read_model(top.child("model"), cfg.model);
  read_federation(top.child("federation"), cfg.federation);
  read_transforms(top.child("transforms"), cfg.transforms);
  read_unlearning(top.child("unlearning"), cfg.unlearning);
  read_evaluation(top.child("evaluation"), cfg.evaluation, cfg.federation);
  std::string out = cfg.output_dir.string();
  top.get("output_dir", out);
  cfg.output_dir = out;
  top.get("seed", cfg.seed);
  top.finish();
  cfg.federation.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto cfg = parse_config(ss.str());
  // relative paths are taken relative to the config file
  if (cfg.output_dir.is_relative()) cfg.output_dir = path.parent_path() / cfg.output_dir;
  if (!cfg.data.path.empty() && std::filesystem::path(cfg.data.path).is_relative())
    cfg.data.path = (path.parent_path() / cfg.data.path).string();
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  if (d.source != "synthetic" && d.source != "synthetic_images" && d.source != "images")
    throw ConfigError("data.source must be \"synthetic\", \"synthetic_images\" or \"images\", got \"" + d.source +
                      "\"");
  if (d.source == "images" && d.path.empty()) throw ConfigError("data.path is required when data.source is \"images\"");
  if (d.source != "images") {
    if (d.num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
    if (d.per_class < 1) throw ConfigError("data.per_class must be >= 1");
    if (!(d.separation >= 0) || !std::isfinite(d.separation)) throw ConfigError("data.separation must be >= 0");
  }
  if (d.source == "synthetic_images" && (d.image_shape.size() != 3 || shape_product(d.image_shape) == 0))
    throw ConfigError("data.image_shape must be a nonempty [C, H, W] for synthetic_images");
  if (d.source == "synthetic") {
    if (d.dim < d.num_classes) throw ConfigError("data.dim must be >= data.num_classes");
    if (!d.image_shape.empty() && shape_product(d.image_shape) != d.dim)
      throw ConfigError("data.image_shape " + shape_to_string(d.image_shape) + " does not hold data.dim = " +
                        std::to_string(d.dim) + " values");
  }
  if (!(d.test_fraction >= 0 && d.holdout_fraction >= 0 && d.test_fraction + d.holdout_fraction < 1))
    throw ConfigError("data.test_fraction and data.holdout_fraction must be >= 0 with a sum below 1");
  if (!(d.kappa > 0) || !std::isfinite(d.kappa)) throw ConfigError("data.kappa must be > 0");
  for (const auto& [k, f] : d.forget) {
    if (k >= cfg.federation.num_clients)
      throw ConfigError("data.forget: client " + std::to_string(k) + " does not exist (num_clients = " +
                        std::to_string(cfg.federation.num_clients) + ")");
    if (!(f >= 0 && f <= 1)) throw ConfigError("data.forget." + std::to_string(k) + " must be in [0, 1]");
  }
  if (cfg.model.arch != "mlp" && cfg.model.arch != "cnn")
    throw ConfigError("model.arch must be \"mlp\" or \"cnn\", got \"" + cfg.model.arch + "\"");
  if (cfg.model.hidden < 1) throw ConfigError("model.hidden must be >= 1");
  const auto& e = cfg.evaluation;
  if (e.member_calibration < 1) throw ConfigError("evaluation.member_calibration must be >= 1");
  if (e.sweep_mode != "pipeline" && e.sweep_mode != "cutout")
    throw ConfigError("evaluation.sweep_mode must be \"pipeline\" or \"cutout\"");
  if (!(e.cutout_step > 0 && e.cutout_step <= 1)) throw ConfigError("evaluation.cutout_step must be in (0, 1]");
  for (auto k : cfg.unlearning.request.clients)
    if (k >= cfg.federation.num_clients)
      throw ConfigError("unlearning.clients: client " + std::to_string(k) + " does not exist");
  const auto& pgd = cfg.unlearning.options.pgd;
  if (pgd.radius && !(*pgd.radius >= 0)) throw ConfigError("unlearning.pgd.radius must be >= 0");
  const auto& l1 = cfg.unlearning.options.l1;
  if (!(l1.l1_weight >= 0)) throw ConfigError("unlearning.l1.l1_weight must be >= 0");
  if (!(l1.prune_quantile >= 0 && l1.prune_quantile < 1))
    throw ConfigError("unlearning.l1.prune_quantile must be in [0, 1)");
  try {
    federation::validate(cfg.federation);
    transforms::validate(cfg.transforms);
    unlearning::validate(cfg.unlearning.request);
    (void)unlearning::make_unlearner(cfg.unlearning.method);
  } catch (const ArgumentError& err) {
    throw ConfigError(err.what());
  }
}

std::string dump_config(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  json forget = json::object();
  for (const auto& [k, f] : d.forget) forget[std::to_string(k)] = f;
  const auto& f = cfg.federation;
  const auto& t = cfg.transforms;
  const auto& u = cfg.unlearning;
  json j = {
      {"data",
       {{"source", d.source},
        {"path", d.path},
        {"num_classes", d.num_classes},
        {"per_class", d.per_class},
        {"dim", d.dim},
        {"separation", d.separation},
        {"image_shape", d.image_shape},
        {"test_fraction", d.test_fraction},
        {"holdout_fraction", d.holdout_fraction},
        {"kappa", d.kappa},
        {"forget", forget}}},
      {"model", {{"arch", cfg.model.arch}, {"hidden", cfg.model.hidden}}},
      {"federation",
       {{"num_clients", f.num_clients},
        {"rounds", f.rounds},
        {"local_epochs", f.local_epochs},
        {"batch_size", f.batch_size},
        {"lr", f.lr},
        {"momentum", f.momentum},
        {"gamma", f.gamma},
        {"max_intensity", f.max_intensity},
        {"progressive", f.progressive},
        {"participation", f.participation},
        {"threads", f.threads}}},
      {"transforms",
       {{"shift_scale_rotate",
         {{"shift_limit", t.shift_scale_rotate.shift_limit},
          {"scale_limit", t.shift_scale_rotate.scale_limit},
          {"rotate_limit", t.shift_scale_rotate.rotate_limit}}},
        {"brightness_contrast",
         {{"brightness_limit", t.brightness_contrast.brightness_limit},
          {"contrast_limit", t.brightness_contrast.contrast_limit}}},
        {"hue_saturation_value",
         {{"hue_shift_limit", t.hue_saturation_value.hue_shift_limit},
          {"sat_shift_limit", t.hue_saturation_value.sat_shift_limit},
          {"val_shift_limit", t.hue_saturation_value.val_shift_limit}}},
        {"random_gamma", {{"gamma_limit", t.random_gamma.gamma_limit}}},
        {"rgb_shift", {{"shift_limit", t.rgb_shift.shift_limit}}},
        {"gaussian_blur", {{"blur_limit", t.gaussian_blur.blur_limit}}},
        {"motion_blur", {{"blur_limit", t.motion_blur.blur_limit}}},
        {"downscale", {{"scale_min", t.downscale.scale_min}, {"scale_max", t.downscale.scale_max}}},
        {"color_jitter",
         {{"brightness", t.color_jitter.brightness},
          {"contrast", t.color_jitter.contrast},
          {"saturation", t.color_jitter.saturation}}},
        {"sharpen", {{"alpha", t.sharpen.alpha}, {"lightness", t.sharpen.lightness}}},
        {"emboss", {{"alpha", t.emboss.alpha}, {"strength", t.emboss.strength}}},
        {"gauss_noise", {{"var_limit", t.gauss_noise.var_limit}}},
        {"random_resized_crop", {{"scale", t.random_resized_crop.scale}, {"ratio", t.random_resized_crop.ratio}}},
        {"coarse_dropout",
         {{"max_holes", t.coarse_dropout.max_holes},
          {"max_height", t.coarse_dropout.max_height},
          {"max_width", t.coarse_dropout.max_width}}}}},
      {"unlearning",
       {{"method", u.method},
        {"clients", u.request.clients},
        {"epochs", u.request.epochs},
        {"lr", u.request.lr},
        {"rounds", u.request.rounds},
        {"pgd",
         {{"radius", opt(u.options.pgd.radius)},
          {"steps", opt(u.options.pgd.steps)},
          {"loss_cap", u.options.pgd.loss_cap}}},
        {"l1", {{"l1_weight", u.options.l1.l1_weight}, {"prune_quantile", u.options.l1.prune_quantile}}}}},
      {"evaluation",
       {{"member_calibration", cfg.evaluation.member_calibration},
        {"shadow_count", f.retain_checkpoints},
        {"sweep_mode", cfg.evaluation.sweep_mode},
        {"cutout_step", cfg.evaluation.cutout_step},
        {"rmd", cfg.evaluation.rmd}}},
      {"output_dir", cfg.output_dir.string()},
      {"seed", cfg.seed},
  };
  return j.dump(2);
}

}  // namespace tofu::cli
