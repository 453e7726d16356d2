#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tofu/data/partition.hpp"
#include "tofu/nn/model.hpp"

namespace tofu::evaluation {

// Fraction of argmax-correct predictions.
Real accuracy(const nn::ModelSpec& spec, const nn::ParamVector& params, const data::LabeledDataset& ds);
Real accuracy_from_logits(const nn::TensorBuf& logits, std::span<const int> labels);

// Unweighted mean of per-client retain accuracies; clients with an empty
// retain set are left out.
Real retain_accuracy(const nn::ModelSpec& spec, const nn::ParamVector& params,
                     std::span<const data::ClientData> clients);

// Cross-entropy of every sample, in dataset order.
std::vector<Real> sample_losses(const nn::ModelSpec& spec, const nn::ParamVector& params,
                                const data::LabeledDataset& ds);

// Two-sample Kolmogorov-Smirnov distance sup_x |F_a(x) - F_b(x)|.
Real ks_statistic(std::span<const Real> a, std::span<const Real> b);

struct ShadowSet {
  std::vector<nn::ParamVector> models;  // checkpoints from the final rounds
};

struct MiaResult {
  Real efficacy = 0.0;  // fraction of targets judged non-members
  bool degenerate = false;  // variance below 1e-12
  Real member_mean = 0.0, member_std = 0.0;
  Real nonmember_mean = 0.0, nonmember_std = 0.0;
};

// Likelihood ratio test between two Gaussians fitted to the pooled shadow
// losses of members and non-members, sharing one variance. A target is a
// non-member when its loss is strictly more likely under the non-member
// Gaussian, i.e. strictly closer to the non-member mean. With a variance
// below 1e-12 this is the midpoint rule and the result is flagged.
MiaResult mia_from_losses(std::span<const Real> member, std::span<const Real> nonmember,
                          std::span<const Real> target);

// log(p / (1 - p)) for p = exp(-loss), the true-class probability. Losses
// below 1e-12 are raised to it so the score stays finite.
Real logit_confidence(Real loss);

// mia_from_losses on logit_confidence of the per-sample losses.
MiaResult mia_efficacy(const nn::ModelSpec& spec, const ShadowSet& shadows, const nn::ParamVector& target,
                       const data::LabeledDataset& forget, const data::LabeledDataset& nonmember_calib,
                       const data::LabeledDataset& member_calib);

struct MIEstimate {
  Real value = 0.0;  // nats
  std::string estimator;
  std::string dataset;
};

// Plug-in mutual information of two discrete label sequences, in nats.
Real discrete_mi(std::span<const int> u, std::span<const int> v);

// MI between the predicted labels of two models over ds.
MIEstimate empirical_mi(const nn::ModelSpec& spec, const nn::ParamVector& a, const nn::ParamVector& b,
                        const data::LabeledDataset& ds, const std::string& dataset_name = "");

// Row-stochastic matrices: entry (x, y) = P(y | x).
using Channel = std::vector<std::vector<Real>>;

// Exact I(X; Y_k) for the chain X -> Y_1 -> ... -> Y_m, one value per stage.
std::vector<Real> chain_mutual_information(std::span<const Real> source, std::span<const Channel> channels);

struct DpiReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  Real max_increase = 0.0;  // largest I(stage k+1) - I(stage k) seen
  std::vector<std::vector<Real>> chains;
};

// Random sources and channels drawn from flat Dirichlets; checks that MI
// never grows along any chain by more than 1e-9.
DpiReport dpi_monotonicity_check(std::size_t alphabet, std::size_t length, std::size_t trials, std::uint64_t seed);

// Relative Mahalanobis distance per sample: squared distance to the class
// mean minus squared distance to the global mean, both under the pooled
// within-class covariance + lambda I, lambda = 1e-6 * trace / d.
std::vector<Real> rmd_scores(const nn::TensorBuf& features, std::span<const int> labels);

struct CorrelationReport {
  std::optional<Real> spearman;
  std::optional<Real> pearson;
  std::optional<Real> rmse;  // of the least-squares line
  std::size_t n = 0;
};

CorrelationReport correlation_report(std::span<const Real> x, std::span<const Real> y);

// Mean of the three metrics.
Real overall_score(Real test_acc, Real retain_acc, Real mia_eff);

}  // namespace tofu::evaluation
