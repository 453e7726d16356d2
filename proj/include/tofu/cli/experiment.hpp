#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tofu/cli/config.hpp"
#include "tofu/evaluation/metrics.hpp"

namespace tofu::cli {

struct ExperimentData {
  std::vector<data::ClientData> clients;
  data::LabeledDataset test;
  data::LabeledDataset holdout;  // non-member calibration
};

// Everything is regenerated from the config and its seed; nothing is cached.
ExperimentData prepare_data(const ExperimentConfig& cfg);

nn::ModelSpec build_model(const ExperimentConfig& cfg, const Shape& input_shape, std::size_t num_classes);

// A seeded sample of retained training points, kept in dataset order.
data::LabeledDataset member_calibration(const ExperimentConfig& cfg, const ExperimentData& d);

// Mean RMD of the target model's penultimate features, fitted on all
// training samples.
struct RmdSummary {
  std::optional<Real> forget_mean;
  std::optional<Real> retain_mean;
};

struct AuditReport {
  Real test_accuracy = 0.0;
  Real retain_accuracy = 0.0;
  Real mia_efficacy = 0.0;
  Real overall = 0.0;
  Real ks_forget_vs_test = 0.0;
  evaluation::MiaResult mia;
  std::vector<evaluation::MIEstimate> mi_estimates;  // with a reference model
  std::optional<Real> mi_ratio;                      // forget MI / retain MI
  std::optional<RmdSummary> rmd;
};

struct LossTable {
  std::string split;
  std::vector<data::SampleId> ids;
  std::vector<Real> losses;
};

struct AuditOutput {
  AuditReport report;
  std::vector<LossTable> losses;  // forget, retain, test
};

AuditOutput audit(const ExperimentConfig& cfg, const nn::ModelSpec& spec, const ExperimentData& d,
                  const nn::ParamVector& target, const evaluation::ShadowSet& shadows,
                  const nn::ParamVector* reference = nullptr);

std::string audit_json(const AuditReport& r);
std::string losses_csv(const LossTable& t);

struct SweepRow {
  int level = 0;
  std::uint64_t seed = 0;
  Real test_acc = 0.0, retain_acc = 0.0, mia_eff = 0.0, overall = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  evaluation::CorrelationReport correlation;
};

// For every (level, seed): train with the forget samples held at that fixed
// intensity, run tofu_unlearn, audit. Correlates level with overall score.
SweepResult sweep_intensity(const ExperimentConfig& base, std::span<const int> levels,
                            std::span<const std::uint64_t> seeds,
                            const std::function<void(const SweepRow&)>& on_row = {});

std::string sweep_csv(const SweepResult& r);
std::string correlation_json(const evaluation::CorrelationReport& c);

}  // namespace tofu::cli
