#ifndef INTERPLAN_RANDOM_HPP_
#define INTERPLAN_RANDOM_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace interplan {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child seed for a stream identified by a path of integers under a parent.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (std::uint64_t part : path) h = splitmix64(h ^ splitmix64(part));
  return h;
}

// Uniform double in [0, 1) built from the top 53 bits, so draws do not depend
// on the standard library's distribution implementation.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

}  // namespace interplan

#endif  // INTERPLAN_RANDOM_HPP_
