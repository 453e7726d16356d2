#include "tofu/data/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tofu::data {

std::vector<std::size_t> largest_remainder(std::span<const Real> proportions, std::size_t total) {
  const std::size_t k = proportions.size();
  if (k == 0) throw ArgumentError("largest_remainder: no proportions");
  std::vector<std::size_t> counts(k);
  std::vector<Real> remainders(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const Real exact = proportions[i] * static_cast<Real>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    remainders[i] = exact - static_cast<Real>(counts[i]);
    assigned += counts[i];
  }
  // Rounding in the proportions can push the floors past the total.
  while (assigned > total) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t j = 0; assigned < total; j = (j + 1) % k, ++assigned) ++counts[order[j]];
  return counts;
}

std::vector<LabeledDataset> dirichlet_partition(const LabeledDataset& ds, const PartitionConfig& cfg) {
  if (cfg.num_clients == 0) throw ArgumentError("dirichlet_partition: need at least one client");
  if (!(cfg.kappa > 0.0)) throw ArgumentError("dirichlet_partition: kappa must be positive");
  if (ds.empty()) throw ArgumentError("dirichlet_partition: empty dataset");
  const std::size_t k = cfg.num_clients;
  std::vector<std::vector<std::size_t>> assigned(k);
  for (std::size_t c = 0; c < ds.num_classes(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (static_cast<std::size_t>(ds.label(i)) == c) members.push_back(i);
    auto rng = make_stream(cfg.seed, {name_tag("dirichlet_partition"), c});
    const auto proportions = dirichlet(rng, k, cfg.kappa);
    shuffle(members, rng);
    const auto counts = largest_remainder(proportions, members.size());
    std::size_t start = 0;
    for (std::size_t client = 0; client < k; ++client) {
      for (std::size_t j = 0; j < counts[client]; ++j) assigned[client].push_back(members[start + j]);
      start += counts[client];
    }
  }
  std::vector<LabeledDataset> out;
  out.reserve(k);
  for (auto& positions : assigned) {
    std::sort(positions.begin(), positions.end());
    out.push_back(ds.subset(positions));
  }
  return out;
}

std::size_t forget_count(Real fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<Real>(n) + 0.5));
}

std::vector<ClientData> designate_forget(const std::vector<LabeledDataset>& clients, const ForgetSpec& spec) {
  for (const auto& [client, fraction] : spec.fractions) {
    if (client >= clients.size())
      throw ArgumentError("forget spec names client " + std::to_string(client) + " but only " +
                          std::to_string(clients.size()) + " clients exist");
    if (!(fraction >= 0.0 && fraction <= 1.0))
      throw ArgumentError("forget fraction for client " + std::to_string(client) + " must lie in [0, 1]");
  }
  std::vector<ClientData> out;
  out.reserve(clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const auto& full = clients[k];
    std::vector<bool> forgotten(full.size(), false);
    if (auto it = spec.fractions.find(k); it != spec.fractions.end()) {
      std::vector<std::size_t> order(full.size());
      std::iota(order.begin(), order.end(), 0);
      auto rng = make_stream(spec.seed, {name_tag("designate_forget"), k});
      shuffle(order, rng);
      const auto n = std::min(full.size(), forget_count(it->second, full.size()));
      for (std::size_t j = 0; j < n; ++j) forgotten[order[j]] = true;
    }
    std::vector<std::size_t> forget_pos, retain_pos;
    for (std::size_t i = 0; i < full.size(); ++i) (forgotten[i] ? forget_pos : retain_pos).push_back(i);
    out.push_back(ClientData{k, full, full.subset(forget_pos), full.subset(retain_pos)});
  }
  return out;
}

}  // namespace tofu::data
