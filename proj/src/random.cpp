#include "cfbeam/random.hpp"

#include <cmath>

namespace cfbeam {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng make_stream(std::uint64_t master_seed, std::string_view tag, std::uint64_t episode,
                std::uint64_t entity) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ fnv1a(tag));
  h = splitmix64(h ^ episode);
  h = splitmix64(h ^ (entity * 0x632be59bd9b4e019ull));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

// 53-bit mantissa in [0, 1); written out so results do not depend on the
// standard library's generate_canonical.
double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::size_t uniform_index(Rng& rng, std::size_t n) {
  // Lemire's rejection keeps the draw exactly uniform.
  const std::uint64_t range = n;
  const std::uint64_t limit = -range % range;
  std::uint64_t x;
  do {
    x = rng();
  } while (x < limit);
  return static_cast<std::size_t>(x % range);
}

double standard_normal(Rng& rng) {
  // Box-Muller with a fresh pair per call.
  double u1;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

cplx complex_normal(Rng& rng) {
  constexpr double s = 0.70710678118654752440;
  return {s * standard_normal(rng), s * standard_normal(rng)};
}

}  // namespace cfbeam
