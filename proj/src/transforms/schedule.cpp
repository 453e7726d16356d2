#include "tofu/transforms/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tofu::transforms {

namespace {

// |{j : x_j > x_i}| for every i, in O(n log n).
std::vector<std::size_t> strictly_greater_counts(std::span<const Real> losses) {
  const std::size_t n = losses.size();
  for (auto v : losses)
    if (!std::isfinite(v)) throw ArgumentError("inverse_quantile: losses must be finite");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] > losses[b]; });
  std::vector<std::size_t> greater(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && losses[order[j]] == losses[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) greater[order[k]] = i;
    i = j;
  }
  return greater;
}

}  // namespace

std::vector<Real> inverse_quantile(std::span<const Real> losses) {
  if (losses.empty()) throw ArgumentError("inverse_quantile: empty loss vector");
  const auto greater = strictly_greater_counts(losses);
  const Real n = static_cast<Real>(losses.size());
  std::vector<Real> out(losses.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>(greater[i]) / n;
  return out;
}

IntensityPlan intensity_counts(std::span<const Real> losses, int m_max) {
  if (m_max < 0) throw ArgumentError("intensity_counts: m_max must be nonnegative");
  if (losses.empty()) throw ArgumentError("intensity_counts: empty loss vector");
  const auto greater = strictly_greater_counts(losses);
  const std::size_t n = losses.size();
  IntensityPlan plan;
  plan.max_level = m_max;
  plan.quantiles.resize(n);
  plan.counts.resize(n);
  const auto m = static_cast<std::size_t>(m_max);
  for (std::size_t i = 0; i < n; ++i) {
    plan.quantiles[i] = static_cast<Real>(greater[i]) / static_cast<Real>(n);
    // Exact integer ceil(m * greater / n); avoids rounding in m * (g / n).
    plan.counts[i] = static_cast<int>((m * greater[i] + n - 1) / n);
  }
  return plan;
}

int progressive_max(const ScheduleState& state) {
  if (state.total_rounds < 1 || state.round < 1 || state.round > state.total_rounds || state.max_level < 0)
    throw ArgumentError("progressive_max: need 1 <= t <= T and M >= 0");
  const long long t = state.round, total = state.total_rounds, m = state.max_level;
  // floor(t*M/T + 1/2) in integers
  const long long level = (2 * t * m + total) / (2 * total);
  return static_cast<int>(std::clamp<long long>(level, 0, m));
}

}  // namespace tofu::transforms
