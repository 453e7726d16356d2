#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tofu/cli/commands.hpp"

namespace {

// TOFU_LOG=trace|debug|info|warn|error|off, default info.
void setup_logging() {
  auto logger = spdlog::stderr_color_mt("tofu-sim");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  if (const char* env = std::getenv("TOFU_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated training, unlearning and audit simulator"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> method;
  std::optional<std::string> checkpoint, reference;
  std::vector<int> levels{0, 2, 4, 6, 8};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t alphabet = 8, length = 5, trials = 100;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "Federated training; writes checkpoints, history.csv, summary.json");
  train->add_option("config", config, "Experiment config (JSON)")->required();

  auto* unlearn = app.add_subcommand("unlearn", "Unlearn the configured forget sets from a checkpoint");
  unlearn->add_option("config", config, "Experiment config (JSON)")->required();
  unlearn->add_option("--method", method, "tofu, exact, pgd or l1 (default: from config)");
  unlearn->add_option("--checkpoint", checkpoint, "Starting checkpoint (default: newest training checkpoint)");

  auto* audit = app.add_subcommand("audit", "Accuracy, MIA, KS and MI report for a checkpoint");
  audit->add_option("config", config, "Experiment config (JSON)")->required();
  audit->add_option("--checkpoint", checkpoint, "Checkpoint to audit (default: newest training checkpoint)");
  audit->add_option("--reference", reference, "Reference model for mutual information");

  auto* sweep = app.add_subcommand("sweep", "Forget-set intensity sweep and its correlation with the overall score");
  sweep->add_option("config", config, "Experiment config (JSON)")->required();
  sweep->add_option("--levels", levels, "Intensity levels")->delimiter(',');
  sweep->add_option("--seeds", seeds, "Seeds")->delimiter(',');

  auto* theory = app.add_subcommand("theory-check", "Mutual information along random Markov chains");
  theory->add_option("--alphabet", alphabet, "Alphabet size")->capture_default_str();
  theory->add_option("--length", length, "Channels per chain")->capture_default_str();
  theory->add_option("--trials", trials, "Number of chains")->capture_default_str();
  theory->add_option("--seed", seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  setup_logging();
  using namespace tofu::cli;
  auto as_path = [](const std::optional<std::string>& s) -> std::optional<fs::path> {
    if (!s) return std::nullopt;
    return fs::path(*s);
  };
  try {
    if (*train) {
      cmd_train(config);
    } else if (*unlearn) {
      cmd_unlearn(config, method, as_path(checkpoint));
    } else if (*audit) {
      cmd_audit(config, as_path(checkpoint), as_path(reference));
    } else if (*sweep) {
      cmd_sweep(config, levels, seeds);
    } else if (*theory) {
      if (!cmd_theory_check(alphabet, length, trials, seed, std::cout)) {
        spdlog::error("theory-check: mutual information increased along a chain");
        return 1;
      }
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
