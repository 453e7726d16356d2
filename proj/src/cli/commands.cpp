#include "tofu/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "tofu/nn/checkpoint.hpp"

namespace tofu::cli {

using json = nlohmann::json;

namespace {

constexpr const char* kIncomplete = "INCOMPLETE";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

// Runs fn; on failure leaves a marker naming the command and the error so
// that half-written artifacts are recognizable.
template <class Fn>
void flag_partial(const fs::path& dir, const std::string& command, Fn&& fn) {
  fs::remove(dir / kIncomplete);
  try {
    fn();
  } catch (const std::exception& e) {
    std::ofstream(dir / kIncomplete) << command << " failed: " << e.what() << "\n";
    throw;
  }
}

struct Loaded {
  ExperimentConfig cfg;
  ExperimentData data;
  nn::ModelSpec spec;
};

Loaded load(const fs::path& config) {
  Loaded l{load_config(config), {}, {}};
  spdlog::info("config {} (seed {})", config.string(), l.cfg.seed);
  l.data = prepare_data(l.cfg);
  const auto& ref = l.data.clients.front().full;
  l.spec = build_model(l.cfg, ref.sample_shape(), ref.num_classes());
  return l;
}

nn::ParamVector load_for(const nn::ModelSpec& spec, const fs::path& path) {
  auto p = nn::load_checkpoint(path);
  if (p.layout != nn::zeros(spec).layout)
    throw FormatError("checkpoint " + path.string() + " does not match the configured model");
  return p;
}

fs::path newest_checkpoint(const fs::path& run_dir) {
  const auto all = list_checkpoints(run_dir);
  if (all.empty()) throw Error("no checkpoints under " + (run_dir / "checkpoints").string() + "; run train first");
  return all.back();
}

}  // namespace

RunLock::RunLock(const fs::path& dir) : path_(dir / ".tofu-sim.lock") {
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f)
    throw Error("output directory " + dir.string() + " is in use by another tofu-sim process (remove " +
                path_.string() + " if no such process exists)");
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::vector<fs::path> list_checkpoints(const fs::path& run_dir) {
  std::vector<fs::path> out;
  const auto dir = run_dir / "checkpoints";
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".tfck") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void cmd_train(const fs::path& config) {
  auto l = load(config);
  const auto& out = l.cfg.output_dir;
  fs::create_directories(out);
  RunLock lock(out);
  flag_partial(out, "train", [&] {
    const transforms::TransformCatalog catalog(l.cfg.transforms);
    const auto run = federation::run_training(l.spec, l.data.clients, l.cfg.federation, catalog);

    const auto ckdir = out / "checkpoints";
    for (const auto& old : list_checkpoints(out)) fs::remove(old);
    fs::create_directories(ckdir);
    json names = json::array();
    for (const auto& c : run.history.checkpoints) {
      const auto name = fmt::format("round_{:04d}.tfck", c.round);
      nn::save_checkpoint(c.params, ckdir / name);
      names.push_back(name);
    }

    std::string csv = "round,participants,mean_loss,duration_ms\n";
    json rounds = json::array();
    for (const auto& r : run.history.rounds) {
      csv += fmt::format("{},{},{},{:.3f}\n", r.round, r.participants.size(), r.mean_loss, r.duration_ms);
      rounds.push_back({{"round", r.round}, {"participants", r.participants}, {"mean_loss", r.mean_loss}});
    }
    write_text(out / "history.csv", csv);

    json clients = json::array();
    for (const auto& c : l.data.clients)
      clients.push_back({{"client", c.client_id}, {"full", c.full.size()}, {"forget", c.forget.size()},
                         {"retain", c.retain.size()}});
    // the run directory itself is left out so that copies of a run compare equal
    auto echoed = json::parse(dump_config(l.cfg));
    echoed.erase("output_dir");
    const json summary = {
        {"command", "train"},
        {"config", echoed},
        {"num_params", run.params.size()},
        {"clients", clients},
        {"test_size", l.data.test.size()},
        {"holdout_size", l.data.holdout.size()},
        {"rounds", rounds},
        {"checkpoints", names},
        {"test_accuracy", l.data.test.empty() ? json(nullptr) : json(evaluation::accuracy(l.spec, run.params, l.data.test))},
    };
    write_text(out / "summary.json", summary.dump(2) + "\n");
    spdlog::info("trained {} rounds, {} checkpoints in {}", l.cfg.federation.rounds, names.size(), ckdir.string());
  });
}

void cmd_unlearn(const fs::path& config, const std::optional<std::string>& method,
                 const std::optional<fs::path>& checkpoint) {
  auto l = load(config);
  const auto name = method.value_or(l.cfg.unlearning.method);
  std::unique_ptr<unlearning::Unlearner> unlearner;
  try {
    unlearner = unlearning::make_unlearner(name, l.cfg.unlearning.options);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  const auto& out = l.cfg.output_dir;
  fs::create_directories(out);
  RunLock lock(out);
  flag_partial(out, "unlearn", [&] {
    nn::ParamVector global;
    std::string source;
    if (name == "exact") {
      global = nn::init_params(l.spec, l.cfg.seed);
      source = "fresh initialization";
    } else {
      const auto ck = checkpoint ? *checkpoint : newest_checkpoint(out);
      global = load_for(l.spec, ck);
      source = ck.string();
    }
    const transforms::TransformCatalog catalog(l.cfg.transforms);
    const unlearning::UnlearnContext ctx{l.spec, global, l.data.clients, l.cfg.unlearning.request,
                                         l.cfg.federation, catalog};
    const auto res = unlearner->run(ctx);
    for (const auto& n : res.notes) spdlog::info("{}: {}", name, n);
    const auto target = out / ("unlearned_" + name + ".tfck");
    nn::save_checkpoint(res.params, target);
    const json j = {{"method", res.method},
                    {"input", source},
                    {"output", target.filename().string()},
                    {"seconds", res.seconds},
                    {"notes", res.notes}};
    write_text(out / ("unlearn_" + name + ".json"), j.dump(2) + "\n");
    spdlog::info("{} unlearning took {:.3f} s, wrote {}", name, res.seconds, target.string());
  });
}

void cmd_audit(const fs::path& config, const std::optional<fs::path>& checkpoint,
               const std::optional<fs::path>& reference) {
  auto l = load(config);
  const auto& out = l.cfg.output_dir;
  const auto shadow_paths = list_checkpoints(out);
  if (shadow_paths.empty())
    throw Error("audit: missing calibration data, no shadow checkpoints under " + (out / "checkpoints").string() +
                "; run train first");
  fs::create_directories(out);
  RunLock lock(out);
  flag_partial(out, "audit", [&] {
    evaluation::ShadowSet shadows;
    for (const auto& p : shadow_paths) shadows.models.push_back(load_for(l.spec, p));
    const auto target = load_for(l.spec, checkpoint.value_or(shadow_paths.back()));
    std::optional<nn::ParamVector> ref;
    if (reference) ref = load_for(l.spec, *reference);
    const auto a = audit(l.cfg, l.spec, l.data, target, shadows, ref ? &*ref : nullptr);
    write_text(out / "audit.json", audit_json(a.report));
    for (const auto& t : a.losses) write_text(out / ("losses_" + t.split + ".csv"), losses_csv(t));
    spdlog::info("audit: test {:.4f} retain {:.4f} mia {:.4f} overall {:.4f} ks {:.4f}", a.report.test_accuracy,
                 a.report.retain_accuracy, a.report.mia_efficacy, a.report.overall, a.report.ks_forget_vs_test);
  });
}

SweepResult cmd_sweep(const fs::path& config, const std::vector<int>& levels, const std::vector<std::uint64_t>& seeds) {
  const auto cfg = load_config(config);
  if (levels.size() < 3) throw ConfigError("sweep: at least 3 intensity levels are required, got " +
                                           std::to_string(levels.size()));
  const auto& out = cfg.output_dir;
  fs::create_directories(out);
  RunLock lock(out);
  SweepResult res;
  flag_partial(out, "sweep", [&] {
    res = sweep_intensity(cfg, levels, seeds, [](const SweepRow& r) {
      spdlog::info("sweep level {} seed {}: overall {:.4f}", r.level, r.seed, r.overall);
    });
    write_text(out / "sweep.csv", sweep_csv(res));
    write_text(out / "sweep_correlation.json", correlation_json(res.correlation));
    if (!res.correlation.spearman) spdlog::warn("sweep: correlation undefined, levels or scores have zero variance");
  });
  return res;
}

bool cmd_theory_check(std::size_t alphabet, std::size_t length, std::size_t trials, std::uint64_t seed,
                      std::ostream& out) {
  const auto r = evaluation::dpi_monotonicity_check(alphabet, length, trials, seed);
  const json j = {{"alphabet", alphabet},   {"length", length},
                  {"trials", r.trials},     {"seed", seed},
                  {"violations", r.violations}, {"max_increase", r.max_increase}};
  out << j.dump(2) << "\n";
  return r.violations == 0;
}

}  // namespace tofu::cli
