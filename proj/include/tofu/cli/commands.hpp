#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tofu/cli/experiment.hpp"

namespace tofu::cli {

namespace fs = std::filesystem;

// Holds <dir>/.tofu-sim.lock while alive; a second holder fails.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

// checkpoints/round_NNNN.tfck, oldest first.
std::vector<fs::path> list_checkpoints(const fs::path& run_dir);

void cmd_train(const fs::path& config);

// Method and checkpoint default to the config's method and the newest
// training checkpoint.
void cmd_unlearn(const fs::path& config, const std::optional<std::string>& method,
                 const std::optional<fs::path>& checkpoint);

void cmd_audit(const fs::path& config, const std::optional<fs::path>& checkpoint,
               const std::optional<fs::path>& reference);

SweepResult cmd_sweep(const fs::path& config, const std::vector<int>& levels, const std::vector<std::uint64_t>& seeds);

// Writes the report as JSON; false when any chain violated the inequality.
bool cmd_theory_check(std::size_t alphabet, std::size_t length, std::size_t trials, std::uint64_t seed,
                      std::ostream& out);

}  // namespace tofu::cli
