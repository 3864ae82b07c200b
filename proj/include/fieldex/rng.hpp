#pragma once

// Deterministic random source. Every random decision in the toolkit flows
// from a single root seed, fanned out into named streams via derive(), so a
// run is fully reproducible from (seed, config, data). Stream assignment:
//   "init"      parameter initialization
//   "split"     train/validation split
//   "shuffle"   epoch shuffling of training records
//   "dropout"   dropout mask sampling
//   "bootstrap" bootstrap resampling
// Child seed = splitmix64(root_seed ^ fnv1a64(stream_name)).
//
// std::mt19937_64 output is fixed by the standard and all draw mappings are
// written out explicitly, so identical seeds give identical draws on any
// platform.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "fieldex/error.hpp"

namespace fieldex {

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : root_(seed), gen_(seed) {}

  uint64_t seed() const { return root_; }

  Rng derive(std::string_view stream) const {
    return Rng(splitmix64(root_ ^ fnv1a64(stream)));
  }

  uint64_t next() { return gen_(); }

  // 53-bit uniform in [0, 1).
  double uniform01() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Unbiased integer in [0, n) by rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) throw InvariantError("Rng::below(0)");
    const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

  std::vector<size_t> permutation(size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(idx.begin(), idx.end());
    return idx;
  }

 private:
  uint64_t root_;
  std::mt19937_64 gen_;
};

}  // namespace fieldex
