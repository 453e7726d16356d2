#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tofu/federation/federation.hpp"
#include "tofu/transforms/catalog.hpp"
#include "tofu/unlearning/unlearning.hpp"

namespace tofu::cli {

// Bad or unreadable configuration. Maps to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DataConfig {
  std::string source = "synthetic";  // "synthetic", "synthetic_images" or "images"
  std::string path;                  // TFU1 file when source == "images"
  std::size_t num_classes = 8;
  std::size_t per_class = 200;
  std::size_t dim = 16;  // synthetic only
  Real separation = 3.0;
  Shape image_shape{1, 4, 4};  // synthetic samples are viewed as CHW images of this shape
  Real test_fraction = 0.2;
  Real holdout_fraction = 0.2;
  Real kappa = 1.0;
  std::map<std::size_t, Real> forget;  // 0-based client index -> fraction
};

struct ModelConfig {
  std::string arch = "mlp";  // "mlp" or "cnn"
  std::size_t hidden = 32;
};

struct UnlearningConfig {
  std::string method = "tofu";
  unlearning::UnlearnRequest request;
  unlearning::MethodOptions options;
};

struct EvaluationConfig {
  std::size_t member_calibration = 200;  // retained training samples used as members
  std::string sweep_mode = "pipeline";   // "pipeline" or "cutout"
  Real cutout_step = 0.1;
  bool rmd = true;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  federation::FederationConfig federation;  // federation.seed mirrors seed
  transforms::TransformParams transforms;
  UnlearningConfig unlearning;
  EvaluationConfig evaluation;
  std::filesystem::path output_dir = "run";
  std::uint64_t seed = 0;
};

// Parses and validates. Unknown keys anywhere are rejected with their path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON of every field, defaults included.
std::string dump_config(const ExperimentConfig& cfg);

void validate(const ExperimentConfig& cfg);

}  // namespace tofu::cli
