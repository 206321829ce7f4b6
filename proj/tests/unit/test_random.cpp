#include <doctest.h>

#include <set>

#include "cfbeam/random.hpp"

using namespace cfbeam;

TEST_CASE("splitmix64 matches the reference sequence") {
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafull);
}

TEST_CASE("fnv1a of the empty string is the offset basis") {
  CHECK(fnv1a("") == 1469598103934665603ull);
  CHECK(fnv1a("a") != fnv1a("b"));
}

TEST_CASE("streams are reproducible and keyed by tag, episode and entity") {
  Rng a = make_stream(5, "traffic", 3, 1);
  Rng b = make_stream(5, "traffic", 3, 1);
  CHECK(a() == b());
  const auto first = [](Rng r) { return r(); };
  std::set<std::uint64_t> heads{first(make_stream(5, "traffic", 3, 1)), first(make_stream(5, "fading", 3, 1)),
                                first(make_stream(5, "traffic", 4, 1)), first(make_stream(5, "traffic", 3, 2)),
                                first(make_stream(6, "traffic", 3, 1))};
  CHECK(heads.size() == 5);
}

TEST_CASE("uniform helpers stay in range") {
  Rng rng = make_stream(1, "range");
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform01(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = uniform(rng, -2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
    CHECK(uniform_index(rng, 7) < 7u);
  }
}

TEST_CASE("uniform_index covers every value evenly") {
  Rng rng = make_stream(2, "index");
  std::vector<int> counts(5, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[uniform_index(rng, 5)];
  for (int c : counts) CHECK(std::abs(c - n / 5) < 500);
}

TEST_CASE("complex normal has unit variance and independent parts") {
  Rng rng = make_stream(3, "cn");
  const int n = 100000;
  double power = 0.0, re2 = 0.0, cross = 0.0;
  cplx mean = 0.0;
  for (int i = 0; i < n; ++i) {
    const cplx z = complex_normal(rng);
    power += std::norm(z);
    re2 += z.real() * z.real();
    cross += z.real() * z.imag();
    mean += z;
  }
  CHECK(power / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(re2 / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::abs(cross / n) < 0.01);
  CHECK(std::abs(mean / double(n)) < 0.01);
}
