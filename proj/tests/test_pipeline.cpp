#include <catch_amalgamated.hpp>

#include <type_traits>

#include "fedcsa/data.hpp"
#include "fedcsa/pipeline.hpp"
#include "privacy_scan.hpp"

using namespace fedcsa;
using Catch::Matchers::WithinAbs;

namespace {

LabeledDataset linear_rows(Index n, double mean, std::uint64_t seed, std::string name, double noise = 1.0) {
  Rng rng(seed);
  Matrix x(n, 3);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < 3; ++k) x(i, k) = rng.normal(mean, 1.0);
    y(i) = x.row(i).mean() + noise * rng.normal();
  }
  return LabeledDataset(x, y, std::move(name));
}

LinearModel model(std::initializer_list<double> w, double b) {
  LinearModel m;
  m.weights.resize(static_cast<Index>(w.size()));
  Index i = 0;
  for (double v : w) m.weights(i++) = v;
  m.intercept = b;
  return m;
}

}  // namespace

TEST_CASE("weighted_predict") {
  const Matrix x = Matrix::Constant(1, 1, 2.0);
  const LinearModel a = model({1}, 0.0), b = model({3}, 0.0);
  WeightedModel single{{{1.0, model({0.5}, 1.0)}}, Hyperparameter(0.0)};
  CHECK(weighted_predict(single, x)(0) == predict(single.components[0].model, x)(0));
  WeightedModel two{{{0.5, a}, {0.5, b}}, Hyperparameter(0.0)};
  CHECK_THAT(weighted_predict(two, x)(0), WithinAbs(4.0, 1e-12));
  WeightedModel same{{{0.2, b}, {0.3, b}, {0.5, b}}, Hyperparameter(0.0)};
  CHECK_THAT(weighted_predict(same, x)(0), WithinAbs(6.0, 1e-12));
  CHECK_THROWS_AS(weighted_predict(two, Matrix::Ones(1, 2)), DimensionMismatch);
}

TEST_CASE("weighted_predict stays between its components") {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    WeightedModel m;
    double total = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double a = rng.uniform();
      total += a;
      m.components.push_back({a, model({rng.normal(), rng.normal()}, rng.normal())});
    }
    for (auto& c : m.components) c.alpha /= total;
    Matrix x(5, 2);
    for (Index i = 0; i < 5; ++i) x.row(i) << rng.normal(), rng.normal();
    const Vector y = weighted_predict(m, x);
    for (Index i = 0; i < 5; ++i) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& c : m.components) {
        const double p = predict(c.model, x.row(i))(0);
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
      CHECK((y(i) >= lo - 1e-12 && y(i) <= hi + 1e-12));
    }
  }
}

TEST_CASE("mae") {
  Vector a(3), b(2), c(2);
  a << 1, 2, 3;
  b << 1, 3;
  c << 2, 1;
  CHECK(mae(a, a) == 0.0);
  CHECK_THAT(mae(b, c), WithinAbs(1.5, 1e-12));
  CHECK(mae(Vector::Zero(1), Vector::Constant(1, -4.0)) == 4.0);
  CHECK_THROWS_AS(mae(Vector(0), Vector(0)), EmptyInput);
  CHECK_THROWS_AS(mae(a, b), DimensionMismatch);
}

TEST_CASE("run_federated_method basics") {
  const auto target = linear_rows(20, 0.0, 1, "target");
  const std::vector<LabeledDataset> one{linear_rows(60, 0.5, 2, "a")};
  for (auto kind : {EstimatorKind::FedIW, EstimatorKind::FedDA, EstimatorKind::Naive}) {
    const auto m = run_federated_method(one, target.features, kind, Learner::Ridge, uniform_grid(5), 3);
    REQUIRE(m.components.size() == 1);
    CHECK(m.components[0].alpha == 1.0);
  }
  CHECK_THROWS_AS(run_federated_method(one, target.features, EstimatorKind::FedIW, Learner::Ridge, {}, 3),
                  InvalidArgument);
  const std::vector<LabeledDataset> dup{linear_rows(60, 0.5, 2, "a"), linear_rows(60, 0.5, 3, "a")};
  CHECK_THROWS_AS(
      run_federated_method(dup, target.features, EstimatorKind::FedIW, Learner::Ridge, uniform_grid(3), 3),
      InvalidArgument);
}

TEST_CASE("alphas sum to one for every method") {
  const auto target = linear_rows(20, 0.0, 1, "target");
  const std::vector<LabeledDataset> sources{linear_rows(45, 1.0, 2, "a"), linear_rows(30, 2.0, 3, "b"),
                                            linear_rows(36, -1.0, 4, "c")};
  for (auto kind : {EstimatorKind::FedIW, EstimatorKind::FedDA, EstimatorKind::Naive}) {
    for (auto learner : {Learner::Ridge, Learner::FlattenedWls}) {
      const auto m = run_federated_method(sources, target.features, kind, learner, uniform_grid(11), 9);
      double sum = 0.0;
      for (const auto& c : m.components) {
        CHECK(c.alpha >= 0.0);
        sum += c.alpha;
      }
      CHECK_THAT(sum, WithinAbs(1.0, 1e-10));
    }
  }
}

TEST_CASE("identical sources on the target distribution get about n-proportional weights") {
  const auto target = linear_rows(500, 0.0, 1, "target");
  const std::vector<LabeledDataset> sources{linear_rows(500, 0.0, 2, "a"), linear_rows(500, 0.0, 3, "b")};
  const auto m =
      run_federated_method(sources, target.features, EstimatorKind::FedDA, Learner::Ridge, uniform_grid(11), 4);
  REQUIRE(m.components.size() == 2);
  CHECK(std::abs(m.components[0].alpha - 0.5) <= 0.15);
  CHECK(std::abs(m.components[1].alpha - 0.5) <= 0.15);
}

TEST_CASE("sequential and parallel source execution agree") {
  const auto target = linear_rows(20, 0.0, 1, "target");
  const std::vector<LabeledDataset> sources{linear_rows(45, 1.0, 2, "a"), linear_rows(30, 2.0, 3, "b"),
                                            linear_rows(36, -1.0, 4, "c")};
  FederatedOptions seq, par;
  par.parallel = true;
  for (auto kind : {EstimatorKind::FedIW, EstimatorKind::FedDA}) {
    const auto a = run_federated_method(sources, target.features, kind, Learner::Ridge, uniform_grid(11), 5, seq);
    const auto b = run_federated_method(sources, target.features, kind, Learner::Ridge, uniform_grid(11), 5, par);
    REQUIRE(a.components.size() == b.components.size());
    CHECK(a.theta == b.theta);
    for (std::size_t j = 0; j < a.components.size(); ++j) {
      CHECK(a.components[j].alpha == b.components[j].alpha);
      CHECK(a.components[j].model == b.components[j].model);
    }
  }
}

TEST_CASE("source order does not change the result") {
  const auto target = linear_rows(20, 0.0, 1, "target");
  const std::vector<LabeledDataset> forward{linear_rows(45, 1.0, 2, "a"), linear_rows(30, 2.0, 3, "b")};
  const std::vector<LabeledDataset> backward{forward[1], forward[0]};
  const auto a = run_federated_method(forward, target.features, EstimatorKind::FedDA, Learner::Ridge,
                                      uniform_grid(11), 5);
  const auto b = run_federated_method(backward, target.features, EstimatorKind::FedDA, Learner::Ridge,
                                      uniform_grid(11), 5);
  CHECK(a.theta == b.theta);
  CHECK(a.components[0].model == b.components[0].model);
  CHECK(a.components[0].alpha == b.components[0].alpha);
}

TEST_CASE("transcript holds only schema fields and no source values") {
  const auto target = linear_rows(20, 0.0, 1, "target");
  const std::vector<LabeledDataset> sources{linear_rows(45, 1.0, 2, "a"), linear_rows(30, 2.0, 3, "b")};
  for (auto kind : {EstimatorKind::FedIW, EstimatorKind::FedDA, EstimatorKind::Naive}) {
    wire::Transcript transcript;
    FederatedOptions options;
    options.transcript = &transcript;
    run_federated_method(sources, target.features, kind, Learner::FlattenedWls, uniform_grid(6), 7, options);
    const auto scan = testing::scan_transcript(transcript.messages(), testing::private_values_of(sources));
    CHECK(scan.schema_ok);
    CHECK(scan.leaked_values == 0);
    CHECK(scan.broadcasts == 2);
    CHECK(scan.reports == 12);
  }
}

TEST_CASE("the scanner does notice leaked values") {
  const std::vector<LabeledDataset> sources{linear_rows(10, 1.0, 2, "a")};
  SourceReport r;
  r.source_id = "a";
  r.n_val = 3;
  r.model.weights = Vector::Constant(1, sources[0].outputs(4));
  const auto scan = testing::scan_transcript({wire::encode(r)}, testing::private_values_of(sources));
  CHECK(scan.leaked_values == 1);
}

TEST_CASE("run_reference") {
  SECTION("noiseless linear target is fitted exactly") {
    const auto data = linear_rows(40, 0.0, 1, "t", 0.0);
    const auto m = run_reference(data, Learner::Ridge, uniform_grid(11), 3);
    REQUIRE(m.components.size() == 1);
    CHECK(m.components[0].alpha == 1.0);
    CHECK(m.theta.value() == 0.0);
    CHECK(mae(weighted_predict(m, data.features), data.outputs) <= 1e-6);
  }
  SECTION("too few rows") {
    CHECK_THROWS_AS(run_reference(linear_rows(3, 0.0, 1, "t"), Learner::Ridge, uniform_grid(3), 1), TooFewRows);
  }
  SECTION("duplicate grid entries do not matter") {
    const auto data = linear_rows(40, 0.0, 1, "t");
    auto grid = uniform_grid(6);
    auto doubled = grid;
    doubled.insert(doubled.end(), grid.rbegin(), grid.rend());
    const auto a = run_reference(data, Learner::Ridge, grid, 3);
    const auto b = run_reference(data, Learner::Ridge, doubled, 3);
    CHECK(a.theta == b.theta);
    CHECK(a.components[0].model == b.components[0].model);
  }
}

TEST_CASE("target labels are sealed from federated code") {
  STATIC_REQUIRE_FALSE(std::is_default_constructible_v<EvaluationPass>);
  const Scenario s = gen_case2(1.0, 3, 50);
  CHECK(s.target.labels.reveal_count() == 0);
  CHECK(s.test.labels.reveal_count() == 0);
  const RunSettings settings;
  for (Method m : {Method::FedIW, Method::FedDA, Method::Naive}) {
    const auto r = MethodEvaluator::run(m, s.sources, s.target, s.test, settings, 1);
    CHECK(std::isfinite(r.test_mae));
  }
  CHECK(s.target.labels.reveal_count() == 0);
  CHECK(s.test.labels.reveal_count() == 3);
  MethodEvaluator::run(Method::Reference, s.sources, s.target, s.test, settings, 1);
  CHECK(s.target.labels.reveal_count() == 1);
}

TEST_CASE("method results are reproducible") {
  const Scenario s = gen_case1(20, 30, 20, 11, 100);
  for (Method m : kAllMethods) {
    const auto a = MethodEvaluator::run(m, s.sources, s.target, s.test, RunSettings{}, 2);
    const auto b = MethodEvaluator::run(m, s.sources, s.target, s.test, RunSettings{}, 2);
    CHECK(a.test_mae == b.test_mae);
    CHECK(a.chosen_theta == b.chosen_theta);
    CHECK(a.method == method_name(m));
  }
}
