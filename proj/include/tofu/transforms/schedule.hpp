#pragma once

#include <span>
#include <vector>

#include "tofu/common.hpp"

namespace tofu::transforms {

// F(x)_i = |{j : x_j > x_i}| / n. Ties share a value; the largest loss
// maps to 0 and no value exceeds (n - 1) / n.
std::vector<Real> inverse_quantile(std::span<const Real> losses);

// Per-sample transform counts A_i = ceil(m_max * F(x)_i). Low-loss
// (well-fit) samples receive the most transforms.
struct IntensityPlan {
  std::vector<int> counts;
  int max_level = 0;
  std::vector<Real> quantiles;
};

IntensityPlan intensity_counts(std::span<const Real> losses, int m_max);

struct ScheduleState {
  int round = 1;         // t, 1-based
  int total_rounds = 1;  // T
  int max_level = 0;     // configured M
};

// round-half-up((t / T) * M), clamped to [0, M]
int progressive_max(const ScheduleState& state);

}  // namespace tofu::transforms
