#pragma once

#include <map>
#include <vector>

#include "tofu/data/dataset.hpp"

namespace tofu::data {

struct PartitionConfig {
  std::size_t num_clients = 1;
  Real kappa = 1.0;
  std::uint64_t seed = 0;
};

// Non-IID split: for each class, client proportions ~ Dirichlet(kappa * 1_K)
// are turned into integer counts by largest remainder, and the class's
// samples (shuffled) are dealt out in those counts. Each client keeps its
// samples in original dataset order.
std::vector<LabeledDataset> dirichlet_partition(const LabeledDataset& ds, const PartitionConfig& cfg);

// Integer counts summing to `total` that best match `proportions`
// (largest remainder, ties to the lower index).
std::vector<std::size_t> largest_remainder(std::span<const Real> proportions, std::size_t total);

struct ForgetSpec {
  // 0-based client index -> fraction of that client's samples to forget.
  std::map<std::size_t, Real> fractions;
  std::uint64_t seed = 0;
};

struct ClientData {
  std::size_t client_id = 0;
  LabeledDataset full;
  LabeledDataset forget;
  LabeledDataset retain;  // full minus forget, in original order
};

// round(fraction * |D_k|) (half up) samples chosen uniformly at random
// become the forget set of each listed client; all others forget nothing.
std::vector<ClientData> designate_forget(const std::vector<LabeledDataset>& clients, const ForgetSpec& spec);

std::size_t forget_count(Real fraction, std::size_t n);

}  // namespace tofu::data
