#include "tofu/cli/experiment.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "tofu/data/image_io.hpp"
#include "tofu/data/synth.hpp"
#include "tofu/unlearning/unlearning.hpp"

namespace tofu::cli {

using json = nlohmann::json;

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  const auto& dc = cfg.data;
  data::LabeledDataset all;
  if (dc.source == "synthetic") {
    all = data::synth_gaussian(dc.num_classes, dc.per_class, dc.dim, dc.separation,
                               derive_seed(cfg.seed, {name_tag("data")}));
    if (!dc.image_shape.empty()) all = data::squash_to_images(all, dc.image_shape);
  } else if (dc.source == "synthetic_images") {
    all = data::synth_images(dc.num_classes, dc.per_class, dc.image_shape, dc.separation,
                             derive_seed(cfg.seed, {name_tag("data")}));
  } else {
    all = data::load_images(dc.path);
  }
  const std::vector<Real> fractions{dc.test_fraction, dc.holdout_fraction};
  auto parts = data::split(all, fractions, derive_seed(cfg.seed, {name_tag("split")}));

  ExperimentData d;
  d.test = std::move(parts[0]);
  d.holdout = std::move(parts[1]);
  const auto shards = data::dirichlet_partition(
      parts[2], {cfg.federation.num_clients, dc.kappa, derive_seed(cfg.seed, {name_tag("partition")})});
  d.clients = data::designate_forget(shards, {dc.forget, derive_seed(cfg.seed, {name_tag("forget")})});
  return d;
}

nn::ModelSpec build_model(const ExperimentConfig& cfg, const Shape& input_shape, std::size_t num_classes) {
  auto spec = cfg.model.arch == "cnn" ? nn::small_cnn_spec(input_shape, num_classes)
                                      : nn::mlp_spec(input_shape, cfg.model.hidden, num_classes);
  nn::validate(spec);
  return spec;
}

namespace {

data::LabeledDataset concat_split(std::span<const data::ClientData> clients, data::LabeledDataset data::ClientData::*m) {
  std::vector<data::LabeledDataset> parts;
  for (const auto& c : clients) parts.push_back(c.*m);
  return data::concat(parts);
}

std::optional<Real> mean_of(const std::vector<Real>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<Real>(v.size());
}

json opt_json(const std::optional<Real>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

data::LabeledDataset member_calibration(const ExperimentConfig& cfg, const ExperimentData& d) {
  const auto retained = concat_split(d.clients, &data::ClientData::retain);
  std::vector<std::size_t> pos(retained.size());
  std::iota(pos.begin(), pos.end(), 0);
  auto rng = make_stream(cfg.seed, {name_tag("member_calibration")});
  shuffle(pos, rng);
  pos.resize(std::min(pos.size(), cfg.evaluation.member_calibration));
  std::sort(pos.begin(), pos.end());
  return retained.subset(pos);
}

AuditOutput audit(const ExperimentConfig& cfg, const nn::ModelSpec& spec, const ExperimentData& d,
                  const nn::ParamVector& target, const evaluation::ShadowSet& shadows,
                  const nn::ParamVector* reference) {
  using namespace evaluation;
  const auto forget = concat_split(d.clients, &data::ClientData::forget);
  const auto retain = concat_split(d.clients, &data::ClientData::retain);
  if (forget.empty()) throw ArgumentError("audit: no client has a forget set (see data.forget)");
  if (d.holdout.empty())
    throw ArgumentError("audit: missing non-member calibration data, the holdout split is empty "
                        "(set data.holdout_fraction > 0)");
  if (d.test.empty()) throw ArgumentError("audit: the test split is empty (set data.test_fraction > 0)");
  const auto members = member_calibration(cfg, d);
  if (members.empty()) throw ArgumentError("audit: missing member calibration data, every retain set is empty");

  AuditOutput out;
  auto& r = out.report;
  r.test_accuracy = accuracy(spec, target, d.test);
  r.retain_accuracy = retain_accuracy(spec, target, d.clients);
  r.mia = mia_efficacy(spec, shadows, target, forget, d.holdout, members);
  r.mia_efficacy = r.mia.efficacy;
  r.overall = overall_score(r.test_accuracy, r.retain_accuracy, r.mia_efficacy);
  if (r.mia.degenerate) spdlog::warn("audit: shadow loss variance is degenerate, MIA fell back to the midpoint rule");

  const std::pair<std::string, const data::LabeledDataset*> splits[] = {
      {"forget", &forget}, {"retain", &retain}, {"test", &d.test}};
  for (const auto& [name, ds] : splits) out.losses.push_back({name, ds->ids(), sample_losses(spec, target, *ds)});
  r.ks_forget_vs_test = ks_statistic(out.losses[0].losses, out.losses[2].losses);

  if (reference) {
    r.mi_estimates.push_back(empirical_mi(spec, *reference, target, forget, "forget"));
    if (!retain.empty()) {
      r.mi_estimates.push_back(empirical_mi(spec, *reference, target, retain, "retain"));
      if (r.mi_estimates[1].value > 0) r.mi_ratio = r.mi_estimates[0].value / r.mi_estimates[1].value;
    }
  }

  if (cfg.evaluation.rmd) {
    const auto full = concat_split(d.clients, &data::ClientData::full);
    try {
      const auto scores = rmd_scores(nn::penultimate_features(spec, target, full.all_inputs()), full.labels());
      std::map<data::SampleId, Real> by_id;
      for (std::size_t i = 0; i < full.size(); ++i) by_id[full.id(i)] = scores[i];
      auto collect = [&](const data::LabeledDataset& ds) {
        std::vector<Real> v;
        for (auto id : ds.ids()) v.push_back(by_id.at(id));
        return v;
      };
      r.rmd = RmdSummary{mean_of(collect(forget)), mean_of(collect(retain))};
    } catch (const ArgumentError& e) {
      spdlog::warn("audit: rmd summary skipped: {}", e.what());
    }
  }
  return out;
}

std::string audit_json(const AuditReport& r) {
  json j = {
      {"test_accuracy", r.test_accuracy},
      {"retain_accuracy", r.retain_accuracy},
      {"mia_efficacy", r.mia_efficacy},
      {"overall", r.overall},
      {"ks_forget_vs_test", r.ks_forget_vs_test},
      {"mia",
       {{"degenerate", r.mia.degenerate},
        {"member_mean", r.mia.member_mean},
        {"member_std", r.mia.member_std},
        {"nonmember_mean", r.mia.nonmember_mean},
        {"nonmember_std", r.mia.nonmember_std}}},
  };
  if (!r.mi_estimates.empty()) {
    json arr = json::array();
    for (const auto& e : r.mi_estimates)
      arr.push_back({{"value", e.value}, {"estimator", e.estimator}, {"dataset", e.dataset}});
    j["mi_estimates"] = arr;
    j["mi_ratio"] = opt_json(r.mi_ratio);
  }
  if (r.rmd) j["rmd_summary"] = {{"forget_mean", opt_json(r.rmd->forget_mean)}, {"retain_mean", opt_json(r.rmd->retain_mean)}};
  return j.dump(2) + "\n";
}

std::string losses_csv(const LossTable& t) {
  std::string out = "sample_id,split,loss\n";
  for (std::size_t i = 0; i < t.ids.size(); ++i) out += fmt::format("{},{},{}\n", t.ids[i], t.split, t.losses[i]);
  return out;
}

SweepResult sweep_intensity(const ExperimentConfig& base, std::span<const int> levels,
                            std::span<const std::uint64_t> seeds, const std::function<void(const SweepRow&)>& on_row) {
  if (levels.size() < 3) throw ArgumentError("sweep: at least 3 intensity levels are required");
  if (seeds.empty()) throw ArgumentError("sweep: at least one seed is required");
  const bool cutout = base.evaluation.sweep_mode == "cutout";
  for (int m : levels) {
    if (m < 0) throw ArgumentError("sweep: levels must be >= 0");
    if (!cutout && m > static_cast<int>(transforms::kNumSlots))
      throw ArgumentError(fmt::format("sweep: pipeline levels must be <= {}", transforms::kNumSlots));
  }

  SweepResult res;
  const transforms::TransformCatalog catalog(base.transforms);
  for (int m : levels) {
    for (auto s : seeds) {
      auto cfg = base;
      cfg.seed = s;
      cfg.federation.seed = s;
      cfg.federation.forget_augment = federation::ForgetAugment{
          cutout ? federation::ForgetAugment::Mode::Cutout : federation::ForgetAugment::Mode::Pipeline, m,
          base.evaluation.cutout_step};
      federation::validate(cfg.federation);
      const auto d = prepare_data(cfg);
      const auto& ref = d.clients.front().full;
      const auto spec = build_model(cfg, ref.sample_shape(), ref.num_classes());
      const auto run = federation::run_training(spec, d.clients, cfg.federation, catalog);
      const auto& req = cfg.unlearning.request;
      const auto un = unlearning::tofu_unlearn({spec, run.params, d.clients, req, cfg.federation, catalog});
      evaluation::ShadowSet shadows;
      for (const auto& c : run.history.checkpoints) shadows.models.push_back(c.params);
      const auto a = audit(cfg, spec, d, un.params, shadows).report;
      SweepRow row{m, s, a.test_accuracy, a.retain_accuracy, a.mia_efficacy, a.overall};
      if (on_row) on_row(row);
      res.rows.push_back(row);
    }
  }
  std::vector<Real> x, y;
  for (const auto& r : res.rows) {
    x.push_back(r.level);
    y.push_back(r.overall);
  }
  res.correlation = evaluation::correlation_report(x, y);
  return res;
}

std::string sweep_csv(const SweepResult& r) {
  std::string out = "level,seed,test_acc,retain_acc,mia_eff,overall\n";
  for (const auto& row : r.rows)
    out += fmt::format("{},{},{},{},{},{}\n", row.level, row.seed, row.test_acc, row.retain_acc, row.mia_eff,
                       row.overall);
  return out;
}

std::string correlation_json(const evaluation::CorrelationReport& c) {
  json j = {{"rho", opt_json(c.spearman)}, {"r", opt_json(c.pearson)}, {"e", opt_json(c.rmse)}, {"n", c.n}};
  return j.dump(2) + "\n";
}

}  // namespace tofu::cli
