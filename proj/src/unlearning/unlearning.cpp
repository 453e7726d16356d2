#include "tofu/unlearning/unlearning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "tofu/data/dataset.hpp"
#include "tofu/nn/loss.hpp"
#include "tofu/nn/optim.hpp"

namespace tofu::unlearning {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

nn::ParamVector train_epochs(const nn::ModelSpec& spec, nn::ParamVector theta, const data::LabeledDataset& ds,
                             int epoch_begin, int epoch_end, Real lr, std::size_t batch_size, std::uint64_t seed,
                             std::uint64_t round, std::size_t client, Real l1_weight) {
  if (ds.empty()) return theta;
  for (int e = epoch_begin; e < epoch_end; ++e) {
    const auto es = derive_seed(seed, {name_tag("unlearn"), round, client, static_cast<std::uint64_t>(e)});
    for (const auto& b : data::batch_iter(ds, batch_size, es)) {
      auto g = nn::task_loss_and_grad(spec, theta, ds.gather(b), ds.gather_labels(b));
      if (l1_weight != 0) {
        const auto s = l1_subgradient(theta.values);
        for (std::size_t i = 0; i < s.size(); ++i) g.grad.values[i] += l1_weight * s[i];
      }
      theta = nn::sgd_step(theta, g.grad, lr);
    }
  }
  return theta;
}

Real l2_norm(const std::vector<Real>& v) {
  Real s = 0;
  for (auto x : v) s += x * x;
  return std::sqrt(s);
}

void require_retain(std::span<const data::ClientData> clients, std::span<const std::size_t> req) {
  for (auto k : req)
    if (clients[k].retain.empty())
      throw ArgumentError("client " + std::to_string(k) + " has an empty retain set and cannot fine-tune");
}

// Shared round structure: every round each requester runs `local` from the
// current global and the results are aggregated.
template <class Local>
nn::ParamVector unlearning_rounds(const UnlearnContext& ctx, const std::vector<std::size_t>& req, Local&& local) {
  nn::ParamVector global = ctx.global;
  for (int r = 1; r <= ctx.req.rounds; ++r) {
    std::vector<nn::ParamVector> updated(req.size());
    federation::parallel_for(req.size(), ctx.cfg.threads,
                             [&](std::size_t i) { updated[i] = local(global, req[i], static_cast<std::uint64_t>(r)); });
    global = aggregate_unlearning(global, ctx.clients, req, updated);
  }
  return global;
}

}  // namespace

void validate(const UnlearnRequest& req) {
  if (req.epochs < 0) throw ArgumentError("unlearning: epochs must be >= 0");
  if (req.rounds < 0) throw ArgumentError("unlearning: rounds must be >= 0");
  if (!(req.lr > 0) || !std::isfinite(req.lr)) throw ArgumentError("unlearning: lr must be > 0");
}

std::vector<std::size_t> requesters(const UnlearnRequest& req, std::span<const data::ClientData> clients) {
  std::vector<std::size_t> out;
  if (req.clients.empty()) {
    for (std::size_t k = 0; k < clients.size(); ++k)
      if (!clients[k].forget.empty()) out.push_back(k);
    return out;
  }
  out = req.clients;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (auto k : out)
    if (k >= clients.size()) throw ArgumentError("unlearning: requesting client " + std::to_string(k) + " does not exist");
  return out;
}

nn::ParamVector finetune(const nn::ModelSpec& spec, const nn::ParamVector& start, const data::LabeledDataset& data,
                         int epochs, Real lr, std::size_t batch_size, std::uint64_t seed, std::uint64_t round,
                         std::size_t client) {
  return train_epochs(spec, start, data, 0, epochs, lr, batch_size, seed, round, client, 0.0);
}

nn::ParamVector aggregate_unlearning(const nn::ParamVector& global, std::span<const data::ClientData> clients,
                                     std::span<const std::size_t> requesting,
                                     std::span<const nn::ParamVector> updated) {
  if (requesting.size() != updated.size()) throw ArgumentError("aggregate_unlearning: one update per requester");
  std::vector<nn::ParamVector> params;
  std::vector<std::size_t> sizes;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const auto it = std::find(requesting.begin(), requesting.end(), k);
    if (it != requesting.end()) {
      params.push_back(updated[static_cast<std::size_t>(it - requesting.begin())]);
      sizes.push_back(clients[k].retain.size());
    } else {
      params.push_back(global);
      sizes.push_back(clients[k].full.size());
    }
  }
  return federation::fedavg(params, sizes);
}

UnlearnResult tofu_unlearn(const UnlearnContext& ctx) {
  validate(ctx.req);
  const auto start = Clock::now();
  UnlearnResult res{ctx.global, 0.0, "tofu", {}};
  const auto req = requesters(ctx.req, ctx.clients);
  if (req.empty()) res.notes.push_back("no requesting clients; parameters unchanged");
  if (ctx.req.epochs == 0 || ctx.req.rounds == 0 || req.empty()) {
    res.seconds = seconds_since(start);
    return res;
  }
  require_retain(ctx.clients, req);
  res.params = unlearning_rounds(ctx, req, [&](const nn::ParamVector& g, std::size_t k, std::uint64_t r) {
    return finetune(ctx.spec, g, ctx.clients[k].retain, ctx.req.epochs, ctx.req.lr, ctx.cfg.batch_size,
                    ctx.cfg.seed, r, k);
  });
  res.seconds = seconds_since(start);
  return res;
}

UnlearnResult exact_retrain(const nn::ModelSpec& spec, std::span<const data::ClientData> clients,
                            const federation::FederationConfig& cfg, const transforms::TransformCatalog& catalog) {
  const auto start = Clock::now();
  std::size_t total = 0;
  for (const auto& c : clients) total += c.retain.size();
  if (total == 0) throw ArgumentError("exact_retrain: every retain set is empty");
  auto run = federation::run_training(spec, clients, cfg, catalog, federation::TrainOn::Retain);
  return {std::move(run.params), seconds_since(start), "exact", {}};
}

void project_to_ball(std::vector<Real>& theta, const std::vector<Real>& center, Real radius) {
  if (theta.size() != center.size()) throw ShapeError("project_to_ball: size mismatch");
  if (radius < 0) throw ArgumentError("project_to_ball: radius must be >= 0");
  std::vector<Real> d(theta.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = theta[i] - center[i];
  const Real n = l2_norm(d);
  if (n <= radius) return;
  const Real s = radius / n;
  for (std::size_t i = 0; i < d.size(); ++i) theta[i] = center[i] + s * d[i];
}

nn::ParamVector ascend(const nn::ModelSpec& spec, const nn::ParamVector& reference, const data::LabeledDataset& forget,
                       std::size_t steps, Real lr, Real radius, Real loss_cap, std::size_t batch_size,
                       std::uint64_t seed, std::size_t client, AscentTrace* trace) {
  if (!(radius >= 0)) throw ArgumentError("ascend: radius must be >= 0");
  nn::ParamVector theta = reference;
  if (forget.empty() || steps == 0) return theta;
  std::size_t done = 0;
  for (std::uint64_t epoch = 0; done < steps; ++epoch) {
    const auto es = derive_seed(seed, {name_tag("ascent"), client, epoch});
    for (const auto& b : data::batch_iter(forget, batch_size, es)) {
      if (done == steps) break;
      const auto x = forget.gather(b);
      const auto y = forget.gather_labels(b);
      const auto g = nn::task_loss_and_grad(spec, theta, x, y);
      for (std::size_t i = 0; i < theta.values.size(); ++i) theta.values[i] += lr * g.grad.values[i];
      project_to_ball(theta.values, reference.values, radius);
      const auto losses = nn::per_sample_loss(spec, theta, x, y);
      const Real after = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<Real>(losses.size());
      if (trace) {
        trace->before.push_back(g.loss);
        trace->after.push_back(after);
      }
      ++done;
      if (!std::isfinite(after) || after > loss_cap) {
        if (trace) trace->stopped_early = true;
        return theta;
      }
    }
  }
  return theta;
}

UnlearnResult gradient_ascent_unlearn(const UnlearnContext& ctx, const PgdOptions& opts) {
  validate(ctx.req);
  const auto start = Clock::now();
  UnlearnResult res{ctx.global, 0.0, "pgd", {}};
  const auto req = requesters(ctx.req, ctx.clients);
  if (req.empty() || ctx.req.rounds == 0) {
    res.notes.push_back("nothing to unlearn; parameters unchanged");
    res.seconds = seconds_since(start);
    return res;
  }
  require_retain(ctx.clients, req);
  const Real radius = opts.radius.value_or(0.1 * l2_norm(ctx.global.values));
  if (!(radius >= 0)) throw ArgumentError("pgd: radius must be >= 0");
  std::vector<AscentTrace> traces(ctx.clients.size());

  res.params = unlearning_rounds(ctx, req, [&](const nn::ParamVector& g, std::size_t k, std::uint64_t r) {
    nn::ParamVector theta = g;
    if (r == 1) {
      const auto& forget = ctx.clients[k].forget;
      const std::size_t batches = (forget.size() + ctx.cfg.batch_size - 1) / ctx.cfg.batch_size;
      const std::size_t steps = opts.steps.value_or(static_cast<std::size_t>(ctx.req.epochs) * batches);
      theta = ascend(ctx.spec, g, forget, steps, ctx.req.lr, radius, opts.loss_cap, ctx.cfg.batch_size, ctx.cfg.seed,
                     k, &traces[k]);
    }
    return finetune(ctx.spec, theta, ctx.clients[k].retain, ctx.req.epochs, ctx.req.lr, ctx.cfg.batch_size,
                    ctx.cfg.seed, r, k);
  });
  for (auto k : req)
    if (traces[k].stopped_early)
      res.notes.push_back("client " + std::to_string(k) + ": ascent stopped after " +
                          std::to_string(traces[k].after.size()) + " steps, loss above cap " +
                          std::to_string(opts.loss_cap));
  res.seconds = seconds_since(start);
  return res;
}

std::vector<Real> l1_subgradient(std::span<const Real> theta) {
  std::vector<Real> s(theta.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = theta[i] > 0 ? 1.0 : (theta[i] < 0 ? -1.0 : 0.0);
  return s;
}

void prune_smallest(std::vector<Real>& theta, Real q) {
  if (!(q >= 0 && q < 1)) throw ArgumentError("prune_smallest: quantile must be in [0, 1)");
  const auto n = static_cast<std::size_t>(std::floor(q * static_cast<Real>(theta.size())));
  if (n == 0) return;
  std::vector<std::size_t> order(theta.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(theta[a]) < std::abs(theta[b]); });
  for (std::size_t i = 0; i < n; ++i) theta[order[i]] = 0.0;
}

UnlearnResult l1_sparsify_finetune(const UnlearnContext& ctx, const L1Options& opts) {
  validate(ctx.req);
  if (!(opts.prune_quantile >= 0 && opts.prune_quantile < 1))
    throw ArgumentError("l1: prune_quantile must be in [0, 1)");
  if (!(opts.l1_weight >= 0)) throw ArgumentError("l1: l1_weight must be >= 0");
  const auto start = Clock::now();
  UnlearnResult res{ctx.global, 0.0, "l1", {}};
  const auto req = requesters(ctx.req, ctx.clients);
  if (ctx.req.epochs == 0 || ctx.req.rounds == 0 || req.empty()) {
    res.seconds = seconds_since(start);
    return res;
  }
  require_retain(ctx.clients, req);
  const int half = ctx.req.epochs / 2;
  res.params = unlearning_rounds(ctx, req, [&](const nn::ParamVector& g, std::size_t k, std::uint64_t r) {
    const auto& retain = ctx.clients[k].retain;
    auto theta = train_epochs(ctx.spec, g, retain, 0, half, ctx.req.lr, ctx.cfg.batch_size, ctx.cfg.seed, r, k,
                              opts.l1_weight);
    prune_smallest(theta.values, opts.prune_quantile);
    return train_epochs(ctx.spec, std::move(theta), retain, half, ctx.req.epochs, ctx.req.lr, ctx.cfg.batch_size,
                        ctx.cfg.seed, r, k, 0.0);
  });
  res.seconds = seconds_since(start);
  return res;
}

namespace {

class TofuUnlearner : public Unlearner {
 public:
  std::string name() const override { return "tofu"; }
  UnlearnResult run(const UnlearnContext& ctx) const override { return tofu_unlearn(ctx); }
};

class ExactUnlearner : public Unlearner {
 public:
  std::string name() const override { return "exact"; }
  UnlearnResult run(const UnlearnContext& ctx) const override {
    auto res = exact_retrain(ctx.spec, ctx.clients, ctx.cfg, ctx.catalog);
    res.notes.push_back("exact retraining starts from a fresh initialization; the given model is not used");
    return res;
  }
};

class PgdUnlearner : public Unlearner {
 public:
  explicit PgdUnlearner(PgdOptions o) : opts_(o) {}
  std::string name() const override { return "pgd"; }
  UnlearnResult run(const UnlearnContext& ctx) const override { return gradient_ascent_unlearn(ctx, opts_); }

 private:
  PgdOptions opts_;
};

class L1Unlearner : public Unlearner {
 public:
  explicit L1Unlearner(L1Options o) : opts_(o) {}
  std::string name() const override { return "l1"; }
  UnlearnResult run(const UnlearnContext& ctx) const override { return l1_sparsify_finetune(ctx, opts_); }

 private:
  L1Options opts_;
};

}  // namespace

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"tofu", "exact", "pgd", "l1"};
  return names;
}

std::unique_ptr<Unlearner> make_unlearner(const std::string& name, const MethodOptions& opts) {
  if (name == "tofu") return std::make_unique<TofuUnlearner>();
  if (name == "exact") return std::make_unique<ExactUnlearner>();
  if (name == "pgd") return std::make_unique<PgdUnlearner>(opts.pgd);
  if (name == "l1") return std::make_unique<L1Unlearner>(opts.l1);
  if (name == "federaser" || name == "fedada")
    throw ArgumentError("unlearning method \"" + name +
                        "\" is interface-only: its algorithm is not part of this project. Implement the Unlearner "
                        "interface to add it. Available: tofu, exact, pgd, l1");
  throw ArgumentError("unknown unlearning method \"" + name + "\". Available: tofu, exact, pgd, l1");
}

}  // namespace tofu::unlearning
