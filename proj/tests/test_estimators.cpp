#include <catch_amalgamated.hpp>

#include <vector>

#include "fedcsa/estimators.hpp"
#include "fedcsa/random.hpp"

using namespace fedcsa;
using Catch::Matchers::WithinAbs;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

ValidationEvaluation ev(std::initializer_list<double> r, std::initializer_list<double> l) {
  return ValidationEvaluation(vec(r), vec(l));
}

}  // namespace

TEST_CASE("ValidationEvaluation rejects bad inputs") {
  CHECK_THROWS_AS(ev({1, 2}, {1}), DimensionMismatch);
  CHECK_THROWS_AS(ev({-1}, {1}), InvalidArgument);
  CHECK_THROWS_AS(ev({1}, {-1}), InvalidArgument);
  CHECK_THROWS_AS(ValidationEvaluation(vec({NAN}), vec({1})), InvalidArgument);
}

TEST_CASE("iw_risk") {
  CHECK_THAT(iw_risk(ev({1, 1, 1}, {2, 4, 6})), WithinAbs(4.0, 1e-12));
  CHECK_THAT(iw_risk(ev({2, 0}, {1, 5})), WithinAbs(1.0, 1e-12));
  CHECK(iw_risk(ev({0, 0}, {9, 9})) == 0.0);
  CHECK_THROWS_AS(iw_risk(ValidationEvaluation(Vector(0), Vector(0))), EmptyValidation);
}

TEST_CASE("control_coefficient") {
  CHECK_THAT(control_coefficient(ev({0.5, 1, 3}, {2, 2, 2})), WithinAbs(-2.0, 1e-12));
  CHECK(control_coefficient(ev({1.3, 1.3, 1.3}, {1, 5, 9})) == 0.0);
  CHECK_THAT(control_coefficient(ev({1, 2}, {1, 3})), WithinAbs(-5.0, 1e-9));
  CHECK_THROWS_AS(control_coefficient(ev({1}, {1})), EmptyValidation);
}

TEST_CASE("cv_risk") {
  const auto e = ev({0.2, 1.7, 0.9}, {3, 1, 2});
  CHECK(cv_risk(e, 0.0) == iw_risk(e));
  CHECK_THAT(cv_risk(ev({0.3, 2.5, 1.1}, {4, 4, 4}), -4.0), WithinAbs(4.0, 1e-12));
  CHECK_THAT(cv_risk(ev({1, 2}, {1, 3}), -5.0), WithinAbs(1.0, 1e-9));
  // Not clamped: a large positive eta with small ratios goes negative.
  CHECK(cv_risk(ev({0.1, 0.2}, {0.1, 0.1}), 5.0) < 0.0);
}

TEST_CASE("divergence_estimate") {
  CHECK(divergence_estimate(ev({0.3, 2.5, 1.1}, {4, 4, 4}), -4.0) == kDefaultDivFloor);
  // r = [0, 1], L = [anything, 2], eta = 0 gives z = [0, 2].
  CHECK_THAT(divergence_estimate(ev({0, 1}, {7, 2}), 0.0), WithinAbs(1.0, 1e-9));
  CHECK(divergence_estimate(ev({1, 2}, {1, 3}), -5.0) == kDefaultDivFloor);
  CHECK(divergence_estimate(ev({1, 2}, {1, 3}), -5.0, 0.5) == 0.5);
  CHECK_THROWS_AS(divergence_estimate(ev({1}, {1}), 0.0, 0.0), InvalidArgument);
}

TEST_CASE("constant losses make the control variate exact") {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Index n = 2 + static_cast<Index>(rng.below(30));
    const double c = rng.uniform(0.0, 10.0);
    Vector r(n);
    for (Index i = 0; i < n; ++i) r(i) = rng.uniform(0.0, 5.0);
    const ValidationEvaluation e(r, Vector::Constant(n, c));
    const auto s = summarize_source(e);
    CHECK_THAT(s.f_cv, WithinAbs(c, 1e-9 * (1 + c)));
    CHECK(s.div_hat <= 1e-12 * (1 + c * c) + kDefaultDivFloor);
  }
}

TEST_CASE("source_weights") {
  SECTION("equal divergences give sample-size weights") {
    const std::vector<double> d{2.5, 2.5, 2.5};
    const std::vector<Index> n{10, 20, 70};
    const auto w = source_weights(d, n);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK_THAT(w.lambdas[j], WithinAbs(1.0 / 100.0, 1e-15));
      CHECK_THAT(w.alphas[j], WithinAbs(static_cast<double>(n[j]) / 100.0, 1e-15));
    }
  }
  SECTION("hand example") {
    const std::vector<double> d{1, 3};
    const std::vector<Index> n{10, 30};
    const auto w = source_weights(d, n);
    CHECK_THAT(w.lambdas[0], WithinAbs(1.0 / 20.0, 1e-12));
    CHECK_THAT(w.lambdas[1], WithinAbs(1.0 / 60.0, 1e-12));
    CHECK_THAT(w.alphas[0], WithinAbs(0.5, 1e-12));
    CHECK_THAT(w.alphas[1], WithinAbs(0.5, 1e-12));
  }
  SECTION("single source") {
    const std::vector<double> d{0.7};
    const std::vector<Index> n{12};
    const auto w = source_weights(d, n);
    CHECK_THAT(w.lambdas[0], WithinAbs(1.0 / 12.0, 1e-15));
    CHECK(w.alphas[0] == 1.0);
  }
  SECTION("invalid inputs") {
    const std::vector<double> zero{0.0};
    const std::vector<Index> one{1};
    CHECK_THROWS_AS(source_weights(zero, one), InvalidArgument);
    const std::vector<double> two{1.0, 1.0};
    CHECK_THROWS_AS(source_weights(two, one), DimensionMismatch);
  }
}

TEST_CASE("weights satisfy sum lambda n = 1 for random inputs") {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 1 + rng.below(12);
    std::vector<double> d(k);
    std::vector<Index> n(k);
    for (std::size_t j = 0; j < k; ++j) {
      d[j] = std::exp(rng.uniform(std::log(kDefaultDivFloor), std::log(1e4)));
      n[j] = 1 + static_cast<Index>(rng.below(5000));
    }
    const auto w = source_weights(d, n);
    double identity = 0.0, alpha_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      identity += w.lambdas[j] * static_cast<double>(n[j]);
      alpha_sum += w.alphas[j];
      REQUIRE(w.alphas[j] >= 0.0);
    }
    REQUIRE(std::abs(identity - 1.0) <= 1e-12);
    REQUIRE(std::abs(alpha_sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("fed_iwe and fed_dae") {
  const std::vector<double> one{3.25};
  const std::vector<Index> n1{7};
  CHECK(fed_iwe(one, n1) == 3.25);
  const std::vector<double> f{2, 4};
  const std::vector<Index> n{10, 30};
  CHECK_THAT(fed_iwe(f, n), WithinAbs(3.5, 1e-12));
  const std::vector<double> same{1.5, 1.5, 1.5};
  const std::vector<Index> n3{3, 9, 4};
  CHECK_THAT(fed_iwe(same, n3), WithinAbs(1.5, 1e-15));

  CHECK(fed_dae(one, SourceWeights{{1.0 / 7}, {1.0}}) == 3.25);
  CHECK_THAT(fed_dae(f, SourceWeights{{1.0 / 20, 1.0 / 60}, {0.5, 0.5}}), WithinAbs(3.0, 1e-12));
  const std::vector<double> d3{0.5, 2.0, 9.0};
  CHECK_THAT(fed_dae(same, source_weights(d3, n3)), WithinAbs(1.5, 1e-15));
  CHECK_THROWS_AS(fed_dae(f, SourceWeights{{1.0}, {1.0}}), DimensionMismatch);
}

TEST_CASE("aggregates are convex combinations") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 1 + rng.below(6);
    std::vector<double> f(k), d(k);
    std::vector<Index> n(k);
    for (std::size_t j = 0; j < k; ++j) {
      f[j] = rng.uniform(-2.0, 5.0);
      d[j] = rng.uniform(0.01, 4.0);
      n[j] = 1 + static_cast<Index>(rng.below(100));
    }
    const double lo = *std::min_element(f.begin(), f.end()) - 1e-12;
    const double hi = *std::max_element(f.begin(), f.end()) + 1e-12;
    const double iwe = fed_iwe(f, n);
    const double dae = fed_dae(f, source_weights(d, n));
    CHECK((iwe >= lo && iwe <= hi));
    CHECK((dae >= lo && dae <= hi));
  }
}
