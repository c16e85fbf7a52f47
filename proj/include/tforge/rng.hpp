#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace tforge::rng {

// All randomness in the library flows through std::mt19937_64 (its output
// sequence is pinned by the standard) plus the manual mappings below, so
// results are bit-identical across platforms and standard libraries.
using Engine = std::mt19937_64;

// splitmix64 finalizer; used to derive independent streams from one seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream));
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive(derive(seed, a), b);
}

inline Engine engine(std::uint64_t seed) { return Engine(seed); }

// Uniform in [0, 1) with 53 bits of entropy.
inline double uniform01(Engine& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

// Uniform integer in [0, n). Multiply-high mapping; slight bias is < 2^-64
// per draw and irrelevant here, while staying implementation-independent.
inline std::uint64_t below(Engine& g, std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(g()) * n) >> 64);
}

inline bool coin(Engine& g, double p) { return uniform01(g) < p; }

// Fisher-Yates with the mapping above (std::shuffle is not portable).
template <typename V>
void shuffle(V& v, Engine& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(below(g, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace tforge::rng
