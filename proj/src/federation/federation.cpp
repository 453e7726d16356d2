#include "tofu/federation/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "tofu/data/dataset.hpp"
#include "tofu/nn/loss.hpp"
#include "tofu/nn/optim.hpp"

namespace tofu::federation {

void validate(const FederationConfig& cfg) {
  if (cfg.num_clients < 1) throw ArgumentError("federation: num_clients must be >= 1");
  if (cfg.rounds < 1) throw ArgumentError("federation: rounds must be >= 1");
  if (cfg.local_epochs < 0) throw ArgumentError("federation: local_epochs must be >= 0");
  if (cfg.batch_size < 1) throw ArgumentError("federation: batch_size must be >= 1");
  if (!(cfg.lr > 0) || !std::isfinite(cfg.lr)) throw ArgumentError("federation: lr must be > 0");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1)) throw ArgumentError("federation: momentum must be in [0, 1)");
  if (!std::isfinite(cfg.gamma)) throw ArgumentError("federation: gamma must be finite");
  if (cfg.max_intensity < 0) throw ArgumentError("federation: max_intensity must be >= 0");
  if (!(cfg.participation > 0 && cfg.participation <= 1))
    throw ArgumentError("federation: participation must be in (0, 1]");
  if (cfg.retain_checkpoints < 1) throw ArgumentError("federation: retain_checkpoints must be >= 1");
  if (cfg.forget_augment) {
    const auto& fa = *cfg.forget_augment;
    if (fa.level < 0) throw ArgumentError("federation: forget_augment.level must be >= 0");
    if (fa.mode == ForgetAugment::Mode::Cutout && !(fa.cutout_step >= 0 && fa.cutout_step * fa.level <= 1))
      throw ArgumentError("federation: cutout_step * level must lie in [0, 1]");
  }
}

nn::ParamVector fedavg(std::span<const nn::ParamVector> params, std::span<const std::size_t> sizes) {
  if (params.empty()) throw ArgumentError("fedavg: no client parameters");
  if (params.size() != sizes.size()) throw ArgumentError("fedavg: one size per client is required");
  std::size_t total = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].layout != params[0].layout || params[k].values.size() != params[0].values.size())
      throw ShapeError("fedavg: client " + std::to_string(k) + " has a different parameter layout");
    total += sizes[k];
  }
  if (total == 0) throw ArgumentError("fedavg: all clients have zero samples");
  nn::ParamVector out{params[0].layout, std::vector<Real>(params[0].size(), 0.0)};
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (sizes[k] == 0) continue;
    const Real w = static_cast<Real>(sizes[k]) / static_cast<Real>(total);
    const auto& v = params[k].values;
    for (std::size_t i = 0; i < v.size(); ++i) out.values[i] += w * v[i];
  }
  return out;
}

namespace {

nn::TensorBuf forced_transform(const nn::TensorBuf& x, const ForgetAugment& fa,
                               const transforms::TransformCatalog& catalog, RngStream& rng) {
  if (fa.mode == ForgetAugment::Mode::Cutout) return transforms::cutout(x, fa.cutout_step * fa.level, rng);
  return transforms::apply_pipeline(x, fa.level, catalog, rng);
}

}  // namespace

LocalResult local_training(const nn::ModelSpec& spec, const data::LabeledDataset& data,
                           const nn::ParamVector& global_params, const FederationConfig& cfg,
                           const transforms::TransformCatalog& catalog, const transforms::ScheduleState& state,
                           std::size_t client_index, const std::unordered_set<data::SampleId>& forced) {
  LocalResult result{global_params, 0.0, 0};
  if (data.empty() || cfg.local_epochs == 0) return result;

  const int m_max = cfg.progressive ? transforms::progressive_max(state) : cfg.max_intensity;
  const bool any_forced = cfg.forget_augment && !forced.empty();
  const bool transforms_on = m_max > 0 || any_forced;
  if (transforms_on && data.sample_shape().size() != 3)
    throw ShapeError("local_training: transformations need (C, H, W) samples, got " +
                     shape_to_string(data.sample_shape()));

  const auto round = static_cast<std::uint64_t>(state.round);
  nn::Sgd opt(cfg.lr, cfg.momentum);
  auto& params = result.params;
  Real loss_sum = 0.0;
  std::size_t seen = 0;

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    const auto epoch_seed = derive_seed(cfg.seed, {name_tag("epoch"), round, client_index, e});
    for (const auto& batch : data::batch_iter(data, cfg.batch_size, epoch_seed)) {
      const auto x = data.gather(batch);
      const auto y = data.gather_labels(batch);
      nn::TensorBuf x_star = x;
      if (transforms_on) {
        std::vector<int> counts(batch.size(), 0);
        if (m_max > 0) counts = transforms::intensity_counts(nn::per_sample_loss(spec, params, x, y), m_max).counts;
        const std::size_t stride = data.sample_size();
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const auto id = data.id(batch[i]);
          const bool is_forced = any_forced && forced.contains(id);
          if (!is_forced && counts[i] == 0) continue;
          auto rng = make_stream(cfg.seed, {name_tag("transform"), round, client_index, e,
                                            static_cast<std::uint64_t>(id)});
          const auto xi = data.input_tensor(batch[i]);
          const auto out = is_forced ? forced_transform(xi, *cfg.forget_augment, catalog, rng)
                                     : transforms::apply_pipeline(xi, counts[i], catalog, rng);
          std::copy(out.values().begin(), out.values().end(), x_star.data().begin() + static_cast<long>(i * stride));
        }
      }
      const auto r = nn::tofu_loss(spec, params, x, x_star, y, cfg.gamma);
      opt.step(params, r.grad);
      loss_sum += r.loss * static_cast<Real>(batch.size());
      seen += batch.size();
      ++result.steps;
    }
  }
  result.mean_loss = seen ? loss_sum / static_cast<Real>(seen) : 0.0;
  return result;
}

LocalResult local_training(const nn::ModelSpec& spec, const data::ClientData& client,
                           const nn::ParamVector& global_params, const FederationConfig& cfg,
                           const transforms::TransformCatalog& catalog, const transforms::ScheduleState& state) {
  std::unordered_set<data::SampleId> forced;
  if (cfg.forget_augment) forced.insert(client.forget.ids().begin(), client.forget.ids().end());
  return local_training(spec, client.full, global_params, cfg, catalog, state, client.client_id, forced);
}

std::vector<std::size_t> select_participants(const FederationConfig& cfg, int round) {
  std::vector<std::size_t> all(cfg.num_clients);
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  if (cfg.participation >= 1.0) return all;
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.participation * static_cast<Real>(cfg.num_clients) - 1e-9)));
  auto rng = make_stream(cfg.seed, {name_tag("participation"), static_cast<std::uint64_t>(round)});
  shuffle(all, rng);
  all.resize(n);
  std::sort(all.begin(), all.end());
  return all;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  pool.clear();
  if (error) std::rethrow_exception(error);
}

TrainingRun run_training(const nn::ModelSpec& spec, std::span<const data::ClientData> clients,
                         const FederationConfig& cfg, const transforms::TransformCatalog& catalog, TrainOn on) {
  validate(cfg);
  if (clients.size() != cfg.num_clients)
    throw ArgumentError("run_training: config has " + std::to_string(cfg.num_clients) + " clients but " +
                        std::to_string(clients.size()) + " datasets were given");
  TrainingRun run{nn::init_params(spec, cfg.seed), {}};

  for (int t = 1; t <= cfg.rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    RoundRecord rec;
    rec.round = t;
    rec.participants = select_participants(cfg, t);
    const transforms::ScheduleState state{t, cfg.rounds, cfg.max_intensity};

    std::vector<LocalResult> results(rec.participants.size());
    parallel_for(rec.participants.size(), cfg.threads, [&](std::size_t i) {
      const auto& client = clients[rec.participants[i]];
      if (on == TrainOn::Full) {
        results[i] = local_training(spec, client, run.params, cfg, catalog, state);
      } else {
        results[i] = local_training(spec, client.retain, run.params, cfg, catalog, state, client.client_id);
      }
    });

    std::vector<nn::ParamVector> locals;
    std::size_t total = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& client = clients[rec.participants[i]];
      rec.sizes.push_back(on == TrainOn::Full ? client.full.size() : client.retain.size());
      total += rec.sizes.back();
      rec.client_loss.push_back(results[i].mean_loss);
      locals.push_back(std::move(results[i].params));
    }
    if (total == 0) throw ArgumentError("run_training: no participating client has any samples in round " +
                                        std::to_string(t));
    Real loss = 0.0;
    for (std::size_t i = 0; i < rec.sizes.size(); ++i) {
      rec.weights.push_back(static_cast<Real>(rec.sizes[i]) / static_cast<Real>(total));
      loss += rec.weights.back() * rec.client_loss[i];
    }
    rec.mean_loss = loss;
    run.params = fedavg(locals, rec.sizes);

    run.history.checkpoints.push_back({t, run.params});
    if (run.history.checkpoints.size() > cfg.retain_checkpoints)
      run.history.checkpoints.erase(run.history.checkpoints.begin());
    rec.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    run.history.rounds.push_back(std::move(rec));
  }
  return run;
}

}  // namespace tofu::federation
