#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "tofu/data/partition.hpp"
#include "tofu/nn/model.hpp"
#include "tofu/transforms/catalog.hpp"
#include "tofu/transforms/schedule.hpp"

namespace tofu::federation {

// A fixed augmentation forced onto the forget samples during training,
// used to build models with a controlled amount of forget-set distortion.
struct ForgetAugment {
  enum class Mode { Pipeline, Cutout };
  Mode mode = Mode::Pipeline;
  int level = 0;           // pipeline prefix length, or cutout step count
  Real cutout_step = 0.1;  // masking ratio per level in Cutout mode
};

struct FederationConfig {
  std::size_t num_clients = 4;
  int rounds = 10;
  int local_epochs = 2;
  std::size_t batch_size = 32;
  Real lr = 1e-2;
  Real momentum = 0.0;
  Real gamma = 0.01;
  int max_intensity = 8;
  bool progressive = true;
  Real participation = 1.0;  // fraction of clients per round
  std::uint64_t seed = 0;
  std::size_t retain_checkpoints = 5;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::optional<ForgetAugment> forget_augment;
};

void validate(const FederationConfig& cfg);

// sum_k (n_k / sum_j n_j) * theta_k, accumulated in list order.
// Zero-size entries are skipped.
nn::ParamVector fedavg(std::span<const nn::ParamVector> params, std::span<const std::size_t> sizes);

struct LocalResult {
  nn::ParamVector params;
  Real mean_loss = 0.0;  // sample-weighted over every step
  std::size_t steps = 0;
};

// One client's update for a round. `forced` lists sample ids that get
// cfg.forget_augment instead of the loss-driven intensity.
LocalResult local_training(const nn::ModelSpec& spec, const data::LabeledDataset& data,
                           const nn::ParamVector& global_params, const FederationConfig& cfg,
                           const transforms::TransformCatalog& catalog, const transforms::ScheduleState& state,
                           std::size_t client_index, const std::unordered_set<data::SampleId>& forced = {});

// Trains on client.full; forget ids are forced when cfg.forget_augment is set.
LocalResult local_training(const nn::ModelSpec& spec, const data::ClientData& client,
                           const nn::ParamVector& global_params, const FederationConfig& cfg,
                           const transforms::TransformCatalog& catalog, const transforms::ScheduleState& state);

struct RoundRecord {
  int round = 0;
  std::vector<std::size_t> participants;
  std::vector<std::size_t> sizes;
  std::vector<Real> weights;
  std::vector<Real> client_loss;
  Real mean_loss = 0.0;
  double duration_ms = 0.0;
};

struct Checkpoint {
  int round = 0;
  nn::ParamVector params;
};

struct TrainingHistory {
  std::vector<RoundRecord> rounds;
  std::vector<Checkpoint> checkpoints;  // final R rounds, oldest first
};

enum class TrainOn { Full, Retain };

struct TrainingRun {
  nn::ParamVector params;
  TrainingHistory history;
};

// Clients that take part in round t (1-based), sorted.
std::vector<std::size_t> select_participants(const FederationConfig& cfg, int round);

// T rounds of local training and aggregation from init_params(spec, seed).
TrainingRun run_training(const nn::ModelSpec& spec, std::span<const data::ClientData> clients,
                         const FederationConfig& cfg, const transforms::TransformCatalog& catalog,
                         TrainOn on = TrainOn::Full);

// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace tofu::federation
