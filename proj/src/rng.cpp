#include "srlf/rng.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace srlf {

uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t mix_seed(uint64_t seed, std::string_view tag) {
  // FNV-1a over the tag bytes, then one splitmix64 finalization.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  uint64_t s = seed ^ h;
  return splitmix64(s);
}

uint64_t mix_seed(uint64_t seed, uint64_t value) {
  uint64_t s = seed ^ (value * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL);
  return splitmix64(s);
}

uint64_t DetRng::next() { return splitmix64(state_); }

uint64_t DetRng::bounded(uint64_t n) {
  if (n == 0) throw std::invalid_argument("bounded(0)");
  uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
  for (;;) {
    uint64_t r = next();
    if (r >= threshold) return r % n;
  }
}

double DetRng::uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::vector<size_t> DetRng::sample_indices(size_t population, size_t count) {
  if (count > population) throw std::invalid_argument("sample larger than population");
  std::set<size_t> chosen;
  for (size_t j = population - count; j < population; ++j) {
    size_t t = static_cast<size_t>(bounded(j + 1));
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

}  // namespace srlf
