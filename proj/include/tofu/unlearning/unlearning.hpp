#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tofu/data/partition.hpp"
#include "tofu/federation/federation.hpp"
#include "tofu/nn/model.hpp"

namespace tofu::unlearning {

struct UnlearnRequest {
  // Requesting clients. Empty means every client with a nonempty forget set.
  std::vector<std::size_t> clients;
  int epochs = 5;  // E_u
  Real lr = 1e-2;  // eta_u
  int rounds = 1;
};

void validate(const UnlearnRequest& req);

// The requesting clients in ascending order.
std::vector<std::size_t> requesters(const UnlearnRequest& req, std::span<const data::ClientData> clients);

struct UnlearnResult {
  nn::ParamVector params;
  double seconds = 0.0;
  std::string method;
  std::vector<std::string> notes;
};

// Everything an unlearning method may look at.
struct UnlearnContext {
  const nn::ModelSpec& spec;
  const nn::ParamVector& global;
  std::span<const data::ClientData> clients;
  const UnlearnRequest& req;
  const federation::FederationConfig& cfg;
  const transforms::TransformCatalog& catalog;
};

// Plain task-loss SGD on `data` for `epochs` epochs. Stream tags keep the
// shuffles of different methods, rounds and clients apart.
nn::ParamVector finetune(const nn::ModelSpec& spec, const nn::ParamVector& start, const data::LabeledDataset& data,
                         int epochs, Real lr, std::size_t batch_size, std::uint64_t seed, std::uint64_t round,
                         std::size_t client);

// Unlearning aggregation: requesters are weighted by their retain size,
// everyone else contributes the frozen global params weighted by full size.
nn::ParamVector aggregate_unlearning(const nn::ParamVector& global, std::span<const data::ClientData> clients,
                                     std::span<const std::size_t> requesting,
                                     std::span<const nn::ParamVector> updated);

// Requesting clients fine-tune on their retain sets each round; no
// transformations, no regularizer.
UnlearnResult tofu_unlearn(const UnlearnContext& ctx);

// Fresh federated training on retain sets only.
UnlearnResult exact_retrain(const nn::ModelSpec& spec, std::span<const data::ClientData> clients,
                            const federation::FederationConfig& cfg, const transforms::TransformCatalog& catalog);

struct PgdOptions {
  std::optional<Real> radius;          // default 0.1 * ||global||_2
  std::optional<std::size_t> steps;    // default E_u * forget batches
  Real loss_cap = 50.0;                // stop ascending once a batch loss exceeds this
};

// Projected gradient ascent on forget batches, then retain fine-tuning.
UnlearnResult gradient_ascent_unlearn(const UnlearnContext& ctx, const PgdOptions& opts = {});

// Loss values seen by one ascent run; used to check ascent really ascends.
struct AscentTrace {
  std::vector<Real> before;  // batch loss before each step
  std::vector<Real> after;   // same batch, after the step and projection
  bool stopped_early = false;
};

nn::ParamVector ascend(const nn::ModelSpec& spec, const nn::ParamVector& reference, const data::LabeledDataset& forget,
                       std::size_t steps, Real lr, Real radius, Real loss_cap, std::size_t batch_size,
                       std::uint64_t seed, std::size_t client, AscentTrace* trace = nullptr);

// Projects theta onto the L2 ball of the given radius around center.
void project_to_ball(std::vector<Real>& theta, const std::vector<Real>& center, Real radius);

struct L1Options {
  Real l1_weight = 1e-4;
  Real prune_quantile = 0.0;
};

// L1-penalized retain fine-tuning for the first half of the epochs, then
// magnitude pruning, then plain fine-tuning.
UnlearnResult l1_sparsify_finetune(const UnlearnContext& ctx, const L1Options& opts = {});

// sign(theta) with sign(0) = 0.
std::vector<Real> l1_subgradient(std::span<const Real> theta);

// Zeroes the floor(q * d) smallest-magnitude coordinates (ties by index).
void prune_smallest(std::vector<Real>& theta, Real q);

class Unlearner {
 public:
  virtual ~Unlearner() = default;
  virtual std::string name() const = 0;
  virtual UnlearnResult run(const UnlearnContext& ctx) const = 0;
};

struct MethodOptions {
  PgdOptions pgd;
  L1Options l1;
};

// "tofu", "exact", "pgd" or "l1". Known but unimplemented methods and
// unknown names raise ArgumentError with an explanation.
std::unique_ptr<Unlearner> make_unlearner(const std::string& name, const MethodOptions& opts = {});

const std::vector<std::string>& method_names();

}  // namespace tofu::unlearning
