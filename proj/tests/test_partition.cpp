#include <string>
#include <vector>

#include "doctest.h"
#include "srlf/partition.hpp"

using namespace srlf;

namespace {

CandidateSet make_set(int n) {
  std::vector<ItemId> ids;
  std::map<ItemId, int> labels;
  for (int i = 1; i <= n; ++i) {
    ids.push_back("I" + std::to_string(i));
    labels[ids.back()] = i % 2;
  }
  return CandidateSet(std::move(ids), std::move(labels));
}

}  // namespace

TEST_CASE("four items with pair windows yield the three overlapping pairs") {
  auto subsets = partition(make_set(4), PartitionConfig{2});
  REQUIRE(subsets.size() == 3);
  CHECK(subsets[0].window_index == 1);
  CHECK(subsets[0].items == std::vector<ItemId>{"I1", "I2"});
  CHECK(subsets[1].window_index == 2);
  CHECK(subsets[1].items == std::vector<ItemId>{"I2", "I3"});
  CHECK(subsets[2].window_index == 3);
  CHECK(subsets[2].items == std::vector<ItemId>{"I3", "I4"});
}

TEST_CASE("partition equals brute-force window enumeration for all small n,k") {
  for (int n = 2; n <= 20; ++n) {
    CandidateSet set = make_set(n);
    for (int k = 2; k <= n; ++k) {
      auto subsets = partition(set, PartitionConfig{k});
      REQUIRE(subsets.size() == static_cast<size_t>(n - k + 1));
      for (int j = 0; j < n - k + 1; ++j) {
        CHECK(subsets[j].window_index == j + 1);
        REQUIRE(subsets[j].items.size() == static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) CHECK(subsets[j].items[i] == set.items()[j + i]);
      }
      // Consecutive windows overlap in exactly k-1 items.
      for (size_t j = 1; j < subsets.size(); ++j)
        for (int i = 0; i < k - 1; ++i)
          CHECK(subsets[j].items[i] == subsets[j - 1].items[i + 1]);
    }
  }
}

TEST_CASE("every adjacent pair of the order shares at least one window") {
  CandidateSet set = make_set(12);
  for (int k = 2; k <= 12; ++k) {
    auto members = memberships(partition(set, PartitionConfig{k}));
    for (int i = 1; i < 12; ++i) {
      const auto& a = members.at("I" + std::to_string(i));
      const auto& b = members.at("I" + std::to_string(i + 1));
      bool shared = false;
      for (int wa : a)
        for (int wb : b)
          if (wa == wb) shared = true;
      CHECK(shared);
    }
  }
}

TEST_CASE("window of the full set is a single subset") {
  auto subsets = partition(make_set(5), PartitionConfig{5});
  REQUIRE(subsets.size() == 1);
  CHECK(subsets[0].window_index == 1);
  CHECK(subsets[0].items.size() == 5);
}

TEST_CASE("invalid window sizes are rejected") {
  CHECK_THROWS_AS(partition(make_set(4), PartitionConfig{1}), std::invalid_argument);
  CHECK_THROWS_AS(partition(make_set(4), PartitionConfig{0}), std::invalid_argument);
  CHECK_THROWS_AS(partition(make_set(4), PartitionConfig{5}), std::invalid_argument);
}

TEST_CASE("memberships lists windows ascending per item") {
  auto members = memberships(partition(make_set(6), PartitionConfig{3}));
  CHECK(members.at("I1") == std::vector<int>{1});
  CHECK(members.at("I3") == std::vector<int>{1, 2, 3});
  CHECK(members.at("I6") == std::vector<int>{4});
}
