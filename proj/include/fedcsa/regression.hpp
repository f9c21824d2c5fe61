#pragma once

// Base learners: weighted ridge regression and flattened importance-weighted
// least squares. Both reduce to one d x d symmetric solve.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "fedcsa/core.hpp"

namespace fedcsa {

/// h(x) = intercept + x . weights
struct LinearModel {
  Vector weights;
  double intercept = 0.0;

  Index dimension() const { return weights.size(); }

  bool operator==(const LinearModel& other) const {
    return intercept == other.intercept && weights.size() == other.weights.size() &&
           weights == other.weights;
  }
};

/// A point of the search space [0, 1].
class Hyperparameter {
 public:
  Hyperparameter() = default;
  explicit Hyperparameter(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw InvalidArgument("hyperparameter must lie in [0, 1], got " + std::to_string(value));
    }
  }
  double value() const { return value_; }
  auto operator<=>(const Hyperparameter&) const = default;

 private:
  double value_ = 0.0;
};

/// `points` evenly spaced values covering [0, 1].
inline std::vector<Hyperparameter> uniform_grid(int points) {
  detail::require(points >= 1, "grid needs at least one point");
  std::vector<Hyperparameter> grid;
  grid.reserve(static_cast<std::size_t>(points));
  if (points == 1) {
    grid.emplace_back(0.0);
    return grid;
  }
  for (int i = 0; i < points; ++i) {
    grid.emplace_back(std::min(1.0, static_cast<double>(i) / (points - 1)));
  }
  return grid;
}

enum class Learner { Ridge, FlattenedWls };

inline std::string_view learner_name(Learner learner) {
  return learner == Learner::Ridge ? "ridge" : "flattened_wls";
}

inline Learner parse_learner(std::string_view name) {
  if (name == "ridge") return Learner::Ridge;
  if (name == "flattened_wls") return Learner::FlattenedWls;
  throw InvalidArgument("unknown learner '" + std::string(name) + "'");
}

inline double square_loss(double prediction, double truth) {
  const double r = prediction - truth;
  return r * r;
}

struct RidgeOptions {
  bool fit_intercept = true;
};

/// Minimises (1/sum w) sum_i w_i (h(x_i) - y_i)^2 + penalty * |weights|^2.
/// The intercept is never penalised; it is eliminated by weighted centring.
inline LinearModel fit_ridge(const Eigen::Ref<const Matrix>& features,
                             const Eigen::Ref<const Vector>& outputs,
                             const Eigen::Ref<const Vector>& sample_weights, double penalty,
                             const RidgeOptions& options = {}) {
  const Index n = features.rows();
  const Index d = features.cols();
  detail::require_same(outputs.size(), n, "outputs length does not match feature rows");
  detail::require_same(sample_weights.size(), n, "sample weight length does not match feature rows");
  if (n < 1 || d < 1) throw InvalidArgument("ridge needs at least one row and one column");
  if (!(penalty >= 0.0) || !std::isfinite(penalty)) throw InvalidArgument("ridge penalty must be finite and >= 0");
  if ((sample_weights.array() < 0.0).any() || !sample_weights.allFinite()) {
    throw InvalidArgument("sample weights must be finite and nonnegative");
  }
  const double total = sample_weights.sum();
  if (!(total > 0.0)) throw InvalidArgument("sample weights are all zero");

  const Vector w = sample_weights / total;
  Vector x_mean = Vector::Zero(d);
  double y_mean = 0.0;
  if (options.fit_intercept) {
    x_mean = features.transpose() * w;
    y_mean = w.dot(outputs);
  }
  const Matrix centered = features.rowwise() - x_mean.transpose();
  const Vector y_centered = outputs.array() - y_mean;

  Matrix system = centered.transpose() * w.asDiagonal() * centered;
  system.diagonal().array() += penalty;
  const Vector moment = centered.transpose() * (w.array() * y_centered.array()).matrix();

  Eigen::LLT<Matrix> llt(system);
  const double scale = std::max(system.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  bool singular = llt.info() != Eigen::Success;
  if (!singular) {
    const Vector pivots = Matrix(llt.matrixL()).diagonal();
    const double min_pivot_sq = pivots.cwiseAbs2().minCoeff();
    singular = !(min_pivot_sq > 1e-12 * scale);
  }
  if (singular) {
    throw SingularSystem("regularised Gram matrix is not positive definite (penalty " +
                         std::to_string(penalty) + ")");
  }

  LinearModel model;
  model.weights = llt.solve(moment);
  model.intercept = options.fit_intercept ? y_mean - x_mean.dot(model.weights) : 0.0;
  if (!model.weights.allFinite() || !std::isfinite(model.intercept)) {
    throw SingularSystem("ridge solution is not finite");
  }
  return model;
}

inline LinearModel fit_ridge(const Eigen::Ref<const Matrix>& features,
                             const Eigen::Ref<const Vector>& outputs, Hyperparameter theta,
                             const RidgeOptions& options = {}) {
  return fit_ridge(features, outputs, Vector::Ones(features.rows()), theta.value(), options);
}

struct FlattenedFit {
  LinearModel model;
  // Set when every r^theta underflowed to zero and uniform weights were used.
  bool uniform_fallback = false;
};

/// Least squares with sample weights r_i^theta: theta = 0 is ordinary least
/// squares, theta = 1 fully importance-weighted.
inline FlattenedFit fit_flattened_iw_ls(const Eigen::Ref<const Matrix>& features,
                                        const Eigen::Ref<const Vector>& outputs,
                                        const Eigen::Ref<const Vector>& ratio_values,
                                        Hyperparameter theta, const RidgeOptions& options = {}) {
  detail::require_same(ratio_values.size(), features.rows(), "ratio values do not match feature rows");
  if ((ratio_values.array() < 0.0).any() || !ratio_values.allFinite()) {
    throw InvalidArgument("ratio values must be finite and nonnegative");
  }
  Vector weights = ratio_values.array().pow(theta.value());
  FlattenedFit fit;
  if (!(weights.sum() > 0.0)) {
    weights.setOnes();
    fit.uniform_fallback = true;
  }
  fit.model = fit_ridge(features, outputs, weights, 0.0, options);
  return fit;
}

inline Vector predict(const LinearModel& model, const Eigen::Ref<const Matrix>& features) {
  detail::require_same(features.cols(), model.dimension(), "feature dimension does not match model");
  return (features * model.weights).array() + model.intercept;
}

}  // namespace fedcsa
