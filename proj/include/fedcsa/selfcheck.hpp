#pragma once

// Monte-Carlo checks of the risk estimators on a one-dimensional Gaussian
// shift benchmark where the density ratio and the target risk are known in
// closed form.
//
// Target x ~ N(mu_T, 1), source x ~ N(mu_S, 1), y | x ~ N(x, 1), fixed model
// h(x) = a + b x and square loss. The true ratio is
// exp(((x - mu_S)^2 - (x - mu_T)^2) / 2).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedcsa/core.hpp"
#include "fedcsa/estimators.hpp"
#include "fedcsa/random.hpp"

namespace fedcsa {

struct ShiftBenchmark {
  double target_mean = 0.0;
  double intercept = 0.2;
  double slope = 0.5;

  double ratio(double x, double source_mean) const {
    const double ds = x - source_mean;
    const double dt = x - target_mean;
    return std::exp(0.5 * (ds * ds - dt * dt));
  }

  /// E_T[(a + b x - y)^2] with x ~ N(mu_T, 1) and y | x ~ N(x, 1).
  double target_risk() const {
    const double c = slope - 1.0;
    return c * c * (1.0 + target_mean * target_mean) + 2.0 * intercept * c * target_mean + intercept * intercept + 1.0;
  }

  /// Validation rows drawn from the source with the true ratio attached.
  ValidationEvaluation draw(Index n, double source_mean, Rng& rng) const {
    Vector r(n);
    Vector loss(n);
    for (Index i = 0; i < n; ++i) {
      const double x = rng.normal(source_mean, 1.0);
      const double y = x + rng.normal();
      const double e = intercept + slope * x - y;
      r(i) = ratio(x, source_mean);
      loss(i) = e * e;
    }
    return ValidationEvaluation(std::move(r), std::move(loss));
  }
};

struct SelfcheckOptions {
  std::uint64_t seed = 7;
  int unbiased_replications = 200;
  Index unbiased_n_val = 5000;
  int variance_replications = 500;
  std::vector<double> source_means{0.5, 1.0, 1.5};
  std::vector<Index> source_n_val{1500, 1000, 500};
  int random_weightings = 10;
  double variance_slack = 1.05;
  // Test hook: negate the control coefficient everywhere. The variance
  // checks are expected to fail under it.
  bool flip_eta = false;

  static SelfcheckOptions fast() {
    SelfcheckOptions o;
    o.unbiased_replications = 100;
    o.unbiased_n_val = 2000;
    o.variance_replications = 200;
    o.source_n_val = {600, 400, 200};
    return o;
  }
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline double sample_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

inline std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

/// |mean(f_iw) - R_T| <= 2 stderr with the true ratio, single source N(1, 1).
inline CheckResult check_iw_unbiased(const SelfcheckOptions& o, const ShiftBenchmark& bench = {}) {
  Rng rng(derive_seed(o.seed, "unbiased"));
  std::vector<double> est;
  for (int rep = 0; rep < o.unbiased_replications; ++rep) {
    est.push_back(iw_risk(bench.draw(o.unbiased_n_val, 1.0, rng)));
  }
  double mean = 0.0;
  for (double e : est) mean += e;
  mean /= static_cast<double>(est.size());
  const double se = std::sqrt(detail::sample_variance(est) / static_cast<double>(est.size()));
  const double gap = std::abs(mean - bench.target_risk());
  return {"iw_unbiased", gap <= 2.0 * se,
          "mean " + detail::fmt(mean) + " vs " + detail::fmt(bench.target_risk()) + ", |gap| " + detail::fmt(gap) +
              " <= 2*se " + detail::fmt(2.0 * se)};
}

/// Replicated per-source and aggregate estimates on the multi-source benchmark.
struct VarianceSample {
  std::vector<double> iw_single;  // f_iw of the first source
  std::vector<double> cv_single;  // f_cv of the first source
  std::vector<double> fed_iwe;
  std::vector<double> fed_dae;
  std::vector<std::vector<double>> fed_le;  // one series per random weighting
  std::vector<std::vector<double>> le_alphas;
};

inline VarianceSample draw_variance_sample(const SelfcheckOptions& o, const ShiftBenchmark& bench = {}) {
  detail::require(o.source_means.size() == o.source_n_val.size() && !o.source_means.empty(),
                  "selfcheck sources are inconsistent");
  detail::require(o.variance_replications >= 2, "need at least 2 replications");
  const std::size_t k = o.source_means.size();
  VarianceSample s;
  Rng weight_rng(derive_seed(o.seed, "fedle"));
  for (int w = 0; w < o.random_weightings; ++w) {
    std::vector<double> a(k);
    double total = 0.0;
    for (auto& v : a) total += (v = weight_rng.uniform(0.05, 1.0));
    for (auto& v : a) v /= total;
    s.le_alphas.push_back(std::move(a));
  }
  s.fed_le.resize(s.le_alphas.size());

  Rng rng(derive_seed(o.seed, "variance"));
  for (int rep = 0; rep < o.variance_replications; ++rep) {
    std::vector<double> f_iw, f_cv, divs;
    for (std::size_t j = 0; j < k; ++j) {
      const ValidationEvaluation ev = bench.draw(o.source_n_val[j], o.source_means[j], rng);
      double eta = control_coefficient(ev);
      if (o.flip_eta) eta = -eta;
      f_iw.push_back(iw_risk(ev));
      f_cv.push_back(cv_risk(ev, eta));
      divs.push_back(divergence_estimate(ev, eta));
    }
    s.iw_single.push_back(f_iw[0]);
    s.cv_single.push_back(f_cv[0]);
    s.fed_iwe.push_back(fed_iwe(f_iw, o.source_n_val));
    s.fed_dae.push_back(fed_dae(f_cv, source_weights(divs, o.source_n_val)));
    for (std::size_t w = 0; w < s.le_alphas.size(); ++w) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += s.le_alphas[w][j] * f_cv[j];
      s.fed_le[w].push_back(acc);
    }
  }
  return s;
}

inline std::vector<CheckResult> check_variance_orderings(const SelfcheckOptions& o, const ShiftBenchmark& bench = {}) {
  const VarianceSample s = draw_variance_sample(o, bench);
  const double slack = o.variance_slack;
  std::vector<CheckResult> out;
  const double v_cv = detail::sample_variance(s.cv_single);
  const double v_iw = detail::sample_variance(s.iw_single);
  out.push_back({"cv_variance_le_iw", v_cv <= slack * v_iw,
                 "Var(f_cv) " + detail::fmt(v_cv) + " vs Var(f_iw) " + detail::fmt(v_iw)});
  const double v_dae = detail::sample_variance(s.fed_dae);
  const double v_iwe = detail::sample_variance(s.fed_iwe);
  out.push_back({"fed_dae_variance_le_fed_iwe", v_dae <= slack * v_iwe,
                 "Var(FedDAE) " + detail::fmt(v_dae) + " vs Var(FedIWE) " + detail::fmt(v_iwe)});
  bool all = true;
  double tightest = INFINITY;
  for (const auto& le : s.fed_le) {
    const double v = detail::sample_variance(le);
    all = all && v_dae <= slack * v;
    tightest = std::min(tightest, v);
  }
  out.push_back({"fed_dae_variance_le_fed_le", all,
                 "Var(FedDAE) " + detail::fmt(v_dae) + " vs smallest Var(FedLE) " + detail::fmt(tightest) + " over " +
                     std::to_string(s.fed_le.size()) + " weightings"});
  return out;
}

inline std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& o) {
  std::vector<CheckResult> out{check_iw_unbiased(o)};
  for (auto& r : check_variance_orderings(o)) out.push_back(std::move(r));
  return out;
}

}  // namespace fedcsa
