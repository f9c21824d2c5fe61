#pragma once

// Per-source target-risk estimates and their federated aggregates.
//
// A source holding validation rows with density ratios r_i and losses L_i
// estimates the target risk by
//
//   importance weighting:  f_iw = mean(r_i L_i)
//   control variates:      f_cv = mean(r_i L_i + eta (r_i - 1)),
//                          eta  = -Cov(r L, r) / Var(r)
//
// Sources are combined either in proportion to their validation counts
// (fed_iwe) or in inverse proportion to the plug-in variance of the
// control-variate terms (fed_dae), which minimises the asymptotic variance
// among all convex combinations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "fedcsa/core.hpp"

namespace fedcsa {

inline constexpr double kDefaultDivFloor = 1e-8;
inline constexpr double kRatioVarianceGuard = 1e-12;

struct ValidationEvaluation {
  Vector ratio_values;
  Vector loss_values;

  ValidationEvaluation() = default;
  ValidationEvaluation(Vector ratios, Vector losses)
      : ratio_values(std::move(ratios)), loss_values(std::move(losses)) {
    detail::require_same(ratio_values.size(), loss_values.size(), "ratio and loss vectors differ in length");
    if (!ratio_values.allFinite() || !loss_values.allFinite()) {
      throw InvalidArgument("validation ratios and losses must be finite");
    }
    if ((ratio_values.array() < 0.0).any()) throw InvalidArgument("ratio values must be nonnegative");
    if ((loss_values.array() < 0.0).any()) throw InvalidArgument("loss values must be nonnegative");
  }

  Index n_val() const { return ratio_values.size(); }
};

struct SourceRiskSummary {
  double f_iw = 0.0;
  double f_cv = 0.0;
  double eta_hat = 0.0;
  double div_hat = kDefaultDivFloor;
  Index n_val = 0;
};

struct SourceWeights {
  std::vector<double> lambdas;
  std::vector<double> alphas;
};

namespace detail {

inline void require_nonempty(const ValidationEvaluation& ev) {
  if (ev.n_val() < 1) throw EmptyValidation("validation set is empty");
}

}  // namespace detail

inline double iw_risk(const ValidationEvaluation& ev) {
  detail::require_nonempty(ev);
  return ev.ratio_values.cwiseProduct(ev.loss_values).mean();
}

/// -Cov(rL, r) / Var(r) with 1/n normalisation; 0 when Var(r) < 1e-12.
inline double control_coefficient(const ValidationEvaluation& ev) {
  if (ev.n_val() < 2) throw EmptyValidation("control coefficient needs at least 2 validation rows");
  const Vector& r = ev.ratio_values;
  const Vector rl = r.cwiseProduct(ev.loss_values);
  const double r_mean = r.mean();
  const double rl_mean = rl.mean();
  const Vector r_dev = r.array() - r_mean;
  const double var_r = r_dev.squaredNorm() / static_cast<double>(r.size());
  if (var_r < kRatioVarianceGuard) return 0.0;
  const double cov = r_dev.dot((rl.array() - rl_mean).matrix()) / static_cast<double>(r.size());
  return -cov / var_r;
}

/// Per-row control-variate terms z_i = r_i L_i + eta (r_i - 1).
inline Vector control_variate_terms(const ValidationEvaluation& ev, double eta) {
  return (ev.ratio_values.cwiseProduct(ev.loss_values).array() + eta * (ev.ratio_values.array() - 1.0)).matrix();
}

/// Can be negative in finite samples; deliberately not clamped.
inline double cv_risk(const ValidationEvaluation& ev, double eta) {
  detail::require_nonempty(ev);
  return control_variate_terms(ev, eta).mean();
}

/// Plug-in variance of the control-variate terms, floored at div_floor.
inline double divergence_estimate(const ValidationEvaluation& ev, double eta,
                                  double div_floor = kDefaultDivFloor) {
  detail::require_nonempty(ev);
  detail::require(div_floor > 0.0, "div_floor must be positive");
  const Vector z = control_variate_terms(ev, eta);
  const double mean = z.mean();
  const double second = z.squaredNorm() / static_cast<double>(z.size());
  const double variance = second - mean * mean;
  return std::max(variance, div_floor);
}

inline SourceRiskSummary summarize_source(const ValidationEvaluation& ev,
                                          double div_floor = kDefaultDivFloor) {
  SourceRiskSummary s;
  s.n_val = ev.n_val();
  s.f_iw = iw_risk(ev);
  s.eta_hat = ev.n_val() >= 2 ? control_coefficient(ev) : 0.0;
  s.f_cv = cv_risk(ev, s.eta_hat);
  s.div_hat = divergence_estimate(ev, s.eta_hat, div_floor);
  return s;
}

/// lambda_j = (Div_j * sum_k n_k / Div_k)^-1 and alpha_j = lambda_j n_j,
/// so that sum_j lambda_j n_j = 1.
inline SourceWeights source_weights(std::span<const double> divergences, std::span<const Index> n_vals) {
  detail::require(!divergences.empty(), "source_weights needs at least one source");
  detail::require_same(static_cast<Index>(divergences.size()), static_cast<Index>(n_vals.size()),
                       "divergence and n_val counts differ");
  double precision_sum = 0.0;
  for (std::size_t j = 0; j < divergences.size(); ++j) {
    detail::require(divergences[j] > 0.0 && std::isfinite(divergences[j]), "divergences must be positive and finite");
    detail::require(n_vals[j] >= 1, "n_val must be positive");
    precision_sum += static_cast<double>(n_vals[j]) / divergences[j];
  }
  SourceWeights w;
  w.lambdas.resize(divergences.size());
  w.alphas.resize(divergences.size());
  for (std::size_t j = 0; j < divergences.size(); ++j) {
    w.lambdas[j] = 1.0 / (divergences[j] * precision_sum);
    w.alphas[j] = w.lambdas[j] * static_cast<double>(n_vals[j]);
  }
  return w;
}

/// lambda_j = 1 / sum_k n_k, alpha_j = n_j / sum_k n_k.
inline SourceWeights sample_size_weights(std::span<const Index> n_vals) {
  detail::require(!n_vals.empty(), "sample_size_weights needs at least one source");
  double total = 0.0;
  for (Index n : n_vals) {
    detail::require(n >= 1, "n_val must be positive");
    total += static_cast<double>(n);
  }
  SourceWeights w;
  for (Index n : n_vals) {
    w.lambdas.push_back(1.0 / total);
    w.alphas.push_back(static_cast<double>(n) / total);
  }
  return w;
}

inline double fed_iwe(std::span<const double> f_iws, std::span<const Index> n_vals) {
  detail::require(!f_iws.empty(), "fed_iwe needs at least one source");
  detail::require_same(static_cast<Index>(f_iws.size()), static_cast<Index>(n_vals.size()),
                       "estimate and n_val counts differ");
  double total = 0.0;
  double acc = 0.0;
  for (std::size_t j = 0; j < f_iws.size(); ++j) {
    detail::require(n_vals[j] >= 1, "n_val must be positive");
    total += static_cast<double>(n_vals[j]);
    acc += static_cast<double>(n_vals[j]) * f_iws[j];
  }
  return acc / total;
}

/// sum_j alpha_j f_j for any weight vector of the FedLE family.
inline double fed_dae(std::span<const double> f_cvs, const SourceWeights& weights) {
  detail::require(!f_cvs.empty(), "fed_dae needs at least one source");
  detail::require_same(static_cast<Index>(f_cvs.size()), static_cast<Index>(weights.alphas.size()),
                       "estimate and weight counts differ");
  double acc = 0.0;
  for (std::size_t j = 0; j < f_cvs.size(); ++j) acc += weights.alphas[j] * f_cvs[j];
  return acc;
}

}  // namespace fedcsa
