#include <catch_amalgamated.hpp>

#include <set>

#include "fedcsa/random.hpp"

using namespace fedcsa;

TEST_CASE("derive_seed separates roles and indices") {
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
  CHECK(seen.size() == 1000);
}

TEST_CASE("Rng streams are reproducible") {
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(a.uniform() == b.uniform());
    REQUIRE(a.normal() == b.normal());
    REQUIRE(a.below(17) == b.below(17));
  }
}

TEST_CASE("Rng draws stay in range and have the right moments") {
  Rng rng(3);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(rng.below(5) < 5);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("permutation covers every index once") {
  Rng rng(11);
  auto p = rng.permutation(50);
  std::set<std::size_t> s(p.begin(), p.end());
  CHECK(s.size() == 50);
  CHECK(*s.rbegin() == 49);
}
