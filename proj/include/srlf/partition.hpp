#pragma once

#include <map>
#include <vector>

#include "srlf/domain.hpp"

namespace srlf {

struct PartitionConfig {
  int window_size = 2;  // k; overlapping pairs by default
};

// Splits the candidate order into the n-k+1 contiguous overlapping windows,
// window_index ascending from 1. Throws if k < 2 or k > n.
std::vector<Subset> partition(const CandidateSet& set, const PartitionConfig& config);

// Which windows each item appears in, window indices ascending.
std::map<ItemId, std::vector<int>> memberships(const std::vector<Subset>& subsets);

}  // namespace srlf
