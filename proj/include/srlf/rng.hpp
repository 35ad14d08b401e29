#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace srlf {

// splitmix64 step; also used as the seed-mixing finalizer.
uint64_t splitmix64(uint64_t& state);

// Folds string tags into a seed so derived streams (per user, per position)
// are independent of each other and stable across platforms.
uint64_t mix_seed(uint64_t seed, std::string_view tag);
uint64_t mix_seed(uint64_t seed, uint64_t value);

// Deterministic RNG with a fixed cross-platform algorithm. std::shuffle and
// std::uniform_int_distribution are implementation-defined, which would break
// byte-identical replay of experiment logs, so sampling is implemented here.
class DetRng {
 public:
  explicit DetRng(uint64_t seed) : state_(seed) {}

  uint64_t next();

  // Unbiased draw in [0, n) via rejection sampling.
  uint64_t bounded(uint64_t n);

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    if (items.size() < 2) return;
    for (size_t i = items.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(bounded(i + 1));
      std::swap(items[i], items[j]);
    }
  }

  // Floyd-style sample of `count` distinct indices from [0, population),
  // returned in ascending order.
  std::vector<size_t> sample_indices(size_t population, size_t count);

 private:
  uint64_t state_;
};

}  // namespace srlf
