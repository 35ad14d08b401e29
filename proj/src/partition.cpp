#include "srlf/partition.hpp"

#include <stdexcept>

namespace srlf {

std::vector<Subset> partition(const CandidateSet& set, const PartitionConfig& config) {
  const int k = config.window_size;
  const int n = static_cast<int>(set.items().size());
  if (k < 2) throw std::invalid_argument("window size must be >= 2");
  if (k > n) throw std::invalid_argument("window exceeds set size");
  std::vector<Subset> subsets;
  subsets.reserve(static_cast<size_t>(n - k + 1));
  for (int j = 1; j <= n - k + 1; ++j) {
    Subset s;
    s.window_index = j;
    s.items.assign(set.items().begin() + (j - 1), set.items().begin() + (j - 1) + k);
    subsets.push_back(std::move(s));
  }
  return subsets;
}

std::map<ItemId, std::vector<int>> memberships(const std::vector<Subset>& subsets) {
  std::map<ItemId, std::vector<int>> out;
  for (const auto& s : subsets)
    for (const auto& id : s.items) out[id].push_back(s.window_index);
  return out;
}

}  // namespace srlf
