#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "cfbeam/common.hpp"

namespace cfbeam {

using Rng = std::mt19937_64;

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x);

// Child stream keyed by (purpose tag, episode, entity). Streams for different
// keys are independent, so the order in which workers consume them is irrelevant.
Rng make_stream(std::uint64_t master_seed, std::string_view tag, std::uint64_t episode = 0,
                std::uint64_t entity = 0);

double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);
double standard_normal(Rng& rng);
// Circularly symmetric CN(0,1).
cplx complex_normal(Rng& rng);

}  // namespace cfbeam
