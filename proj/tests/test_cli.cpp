#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tofu/cli/commands.hpp"
#include "tofu/cli/config.hpp"
#include "tofu/cli/experiment.hpp"
#include "tofu/nn/checkpoint.hpp"

using namespace tofu;
using namespace tofu::cli;
using json = nlohmann::json;

namespace {

json small_config() {
  return json::parse(R"({
    "seed": 3,
    "output_dir": "run",
    "data": {"source": "synthetic_images", "num_classes": 4, "per_class": 20, "separation": 1.5,
             "image_shape": [1, 4, 4], "forget": {"0": 0.3}},
    "model": {"arch": "mlp", "hidden": 8},
    "federation": {"num_clients": 2, "rounds": 3, "local_epochs": 1, "batch_size": 8, "lr": 0.1,
                   "gamma": 0.01, "max_intensity": 2},
    "unlearning": {"method": "tofu", "epochs": 1, "rounds": 1, "lr": 0.05},
    "evaluation": {"member_calibration": 20, "shadow_count": 2}
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A fresh directory holding config.json.
struct Workspace {
  fs::path dir;
  fs::path config;
  explicit Workspace(const json& cfg, const std::string& tag) {
    dir = fs::temp_directory_path() / ("tofu-cli-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    config = dir / "config.json";
    std::ofstream(config) << cfg.dump(2);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  fs::path run() const { return dir / "run"; }
};

int run_tool(const std::string& args) {
  const std::string cmd = std::string(TOFU_SIM_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config(small_config().dump());
  CHECK(cfg.seed == 3);
  CHECK(cfg.federation.seed == 3);
  CHECK(cfg.federation.retain_checkpoints == 2);
  CHECK(cfg.data.forget.at(0) == 0.3);

  SUBCASE("dump and parse round trip") { CHECK(dump_config(parse_config(dump_config(cfg))) == dump_config(cfg)); }
  SUBCASE("unknown keys are rejected with their path") {
    auto j = small_config();
    j["federation"]["bogus"] = 1;
    try {
      parse_config(j.dump());
      FAIL("accepted an unknown key");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("federation.bogus") != std::string::npos);
    }
    auto top = small_config();
    top["extra"] = true;
    CHECK_THROWS_AS(parse_config(top.dump()), ConfigError);
  }
  SUBCASE("type and range errors") {
    auto j = small_config();
    j["federation"]["rounds"] = "three";
    CHECK_THROWS_AS(parse_config(j.dump()), ConfigError);
    j = small_config();
    j["federation"]["rounds"] = -1;
    CHECK_THROWS_AS(parse_config(j.dump()), ConfigError);
    j = small_config();
    j["data"]["source"] = "nowhere";
    CHECK_THROWS_AS(parse_config(j.dump()), ConfigError);
    j = small_config();
    j["data"]["image_shape"] = {16};
    CHECK_THROWS_AS(parse_config(j.dump()), ConfigError);
    j = small_config();
    j["unlearning"]["method"] = "bogus";
    CHECK_THROWS_AS(parse_config(j.dump()), ConfigError);
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  }
  SUBCASE("missing file names the path") {
    try {
      load_config("/nonexistent/tofu.json");
      FAIL("loaded a missing file");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("/nonexistent/tofu.json") != std::string::npos);
    }
  }
  SUBCASE("relative paths follow the config file") {
    auto j = small_config();
    j["data"]["source"] = "images";
    j["data"]["path"] = "images.tfu";
    Workspace w(j, "reldir");
    const auto cfg = load_config(w.config);
    CHECK(cfg.output_dir == w.run());
    CHECK(fs::path(cfg.data.path) == w.dir / "images.tfu");
  }
}

TEST_CASE("train, unlearn and audit") {
  Workspace w(small_config(), "pipeline");
  cmd_train(w.config);

  const auto ckpts = list_checkpoints(w.run());
  REQUIRE(ckpts.size() == 2);
  CHECK(ckpts[0].filename() == "round_0002.tfck");
  CHECK(ckpts[1].filename() == "round_0003.tfck");
  CHECK_FALSE(fs::exists(w.run() / "INCOMPLETE"));
  CHECK_FALSE(fs::exists(w.run() / ".tofu-sim.lock"));

  const auto history = slurp(w.run() / "history.csv");
  CHECK(std::count(history.begin(), history.end(), '\n') == 4);
  const auto summary = json::parse(slurp(w.run() / "summary.json"));
  CHECK(summary["checkpoints"].size() == 2);
  CHECK(summary["rounds"].size() == 3);
  CHECK_FALSE(summary["config"].contains("output_dir"));

  SUBCASE("retraining keeps exactly R checkpoints") {
    cmd_train(w.config);
    CHECK(list_checkpoints(w.run()).size() == 2);
  }
  SUBCASE("tofu with zero epochs returns its input") {
    auto j = small_config();
    j["unlearning"]["epochs"] = 0;
    std::ofstream(w.config) << j.dump();
    cmd_unlearn(w.config, std::nullopt, std::nullopt);
    CHECK(nn::load_checkpoint(w.run() / "unlearned_tofu.tfck") == nn::load_checkpoint(ckpts.back()));
  }
  SUBCASE("exact ignores the checkpoint") {
    cmd_unlearn(w.config, "exact", std::nullopt);
    const auto a = nn::load_checkpoint(w.run() / "unlearned_exact.tfck");
    cmd_unlearn(w.config, "exact", ckpts.front());
    CHECK(nn::load_checkpoint(w.run() / "unlearned_exact.tfck") == a);
    const auto report = json::parse(slurp(w.run() / "unlearn_exact.json"));
    CHECK(report["method"] == "exact");
  }
  SUBCASE("method names") {
    CHECK_THROWS_AS(cmd_unlearn(w.config, "federaser", std::nullopt), ConfigError);
    CHECK_THROWS_AS(cmd_unlearn(w.config, "bogus", std::nullopt), ConfigError);
    for (const char* m : {"tofu", "pgd", "l1"}) {
      cmd_unlearn(w.config, m, std::nullopt);
      CHECK(fs::exists(w.run() / (std::string("unlearned_") + m + ".tfck")));
    }
  }
  SUBCASE("audit report") {
    cmd_unlearn(w.config, "tofu", std::nullopt);
    cmd_audit(w.config, w.run() / "unlearned_tofu.tfck", ckpts.back());
    const auto a = json::parse(slurp(w.run() / "audit.json"));
    for (const char* k : {"test_accuracy", "retain_accuracy", "mia_efficacy", "overall", "ks_forget_vs_test"})
      CHECK(a.contains(k));
    const Real mean = (a["test_accuracy"].get<Real>() + a["retain_accuracy"].get<Real>() +
                       a["mia_efficacy"].get<Real>()) / 3.0;
    CHECK(a["overall"].get<Real>() == doctest::Approx(mean).epsilon(1e-12));
    for (const char* split : {"forget", "retain", "test"})
      CHECK(fs::exists(w.run() / (std::string("losses_") + split + ".csv")));
  }
  SUBCASE("the lock refuses a second holder") {
    RunLock first(w.run());
    CHECK_THROWS_AS(RunLock(w.run()), Error);
    CHECK_THROWS(cmd_train(w.config));
  }
}

TEST_CASE("audit before training is an error") {
  Workspace w(small_config(), "notrain");
  CHECK_THROWS_AS(cmd_audit(w.config, std::nullopt, std::nullopt), Error);
}

TEST_CASE("untrained model audits near chance") {
  auto j = small_config();
  j["data"]["num_classes"] = 8;
  j["data"]["per_class"] = 625;  // 1000 test samples
  j["data"]["image_shape"] = {1, 6, 6};
  const auto cfg = parse_config(j.dump());
  const auto d = prepare_data(cfg);
  REQUIRE(d.test.size() == 1000);
  const auto spec = build_model(cfg, d.test.sample_shape(), 8);
  const auto params = nn::init_params(spec, 11);
  evaluation::ShadowSet shadows{{params}};
  const auto a = audit(cfg, spec, d, params, shadows).report;
  CHECK(std::abs(a.test_accuracy - 1.0 / 8) <= 0.1);
}

TEST_CASE("sweep") {
  auto j = small_config();
  j["federation"]["rounds"] = 2;
  Workspace w(j, "sweep");
  CHECK_THROWS_AS(cmd_sweep(w.config, {0, 1}, {0}), ConfigError);

  const auto r = cmd_sweep(w.config, {0, 1, 2}, {0, 1});
  CHECK(r.rows.size() == 6);
  const auto csv = slurp(w.run() / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  const auto c = json::parse(slurp(w.run() / "sweep_correlation.json"));
  for (const char* k : {"rho", "r", "e", "n"}) CHECK(c.contains(k));
  CHECK(c["n"] == 6);

  const auto flat = cmd_sweep(w.config, {1, 1, 1}, {0});
  CHECK_FALSE(flat.correlation.spearman.has_value());
  CHECK(json::parse(slurp(w.run() / "sweep_correlation.json"))["rho"].is_null());
}

TEST_CASE("theory-check") {
  std::ostringstream a, b;
  CHECK(cmd_theory_check(8, 5, 100, 0, a));
  CHECK(cmd_theory_check(8, 5, 100, 0, b));
  CHECK(a.str() == b.str());
  const auto j = json::parse(a.str());
  CHECK(j["violations"] == 0);
  CHECK(j["trials"] == 100);

  std::ostringstream one;
  CHECK(cmd_theory_check(8, 1, 10, 0, one));
  CHECK(json::parse(one.str())["violations"] == 0);
}

TEST_CASE("tofu-sim exit codes") {
  Workspace w(small_config(), "exit");
  const auto cfg = w.config.string();
  CHECK(run_tool("--help") == 0);
  CHECK(run_tool("") == 2);
  CHECK(run_tool("train /nonexistent/tofu.json") == 2);
  CHECK(run_tool("audit " + cfg) == 1);
  CHECK(run_tool("train " + cfg) == 0);
  CHECK(run_tool("unlearn " + cfg + " --method federaser") == 2);
  CHECK(run_tool("unlearn " + cfg + " --method pgd") == 0);
  CHECK(run_tool("sweep " + cfg + " --levels 0,1 --seeds 0") == 2);
  CHECK(run_tool("theory-check --length 3 --trials 5") == 0);
}
