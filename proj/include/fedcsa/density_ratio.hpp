#pragma once

// Unconstrained least-squares importance fitting (uLSIF).
//
// r(x) = p_target(x) / p_source(x) is modelled as a nonnegative expansion of
// isotropic Gaussian kernels centred on target rows. For fixed (sigma, rho)
// the coefficients solve
//
//   min_a  1/2 a'Ha - h'a + rho/2 a'a
//   H = mean over source rows of phi(x) phi(x)',  h = mean over target rows of phi(x)
//
// in closed form, a = (H + rho I)^-1 h, followed by clipping at zero.
// (sigma, rho) is picked by K-fold cross-validation of the same objective.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "fedcsa/core.hpp"
#include "fedcsa/random.hpp"

namespace fedcsa {

enum class BandwidthReference {
  // Median distance between source rows and kernel centers. Stable when the
  // two samples are far apart.
  SourceToCenters,
  // Median over all pairs of the pooled sample. Jumps between within- and
  // between-sample distances as the sample-size ratio changes.
  PooledPairs,
};

struct UlsifConfig {
  // Multipliers of the median distance selected by bandwidth_reference.
  std::vector<double> bandwidth_candidates{0.5, 1.0, 2.0};
  std::vector<double> regularizer_candidates{1e-3, 1e-2, 1e-1, 1.0};
  int max_centers = 100;
  int cv_folds = 5;
  std::optional<double> clip_ceiling = 50.0;
  // Rows used for the median heuristic; larger pools are subsampled.
  int median_sample = 600;
  // Distance scale the bandwidth multipliers apply to.
  BandwidthReference bandwidth_reference = BandwidthReference::SourceToCenters;

  void validate() const {
    detail::require(!bandwidth_candidates.empty(), "bandwidth candidates must be nonempty");
    detail::require(!regularizer_candidates.empty(), "regularizer candidates must be nonempty");
    for (double b : bandwidth_candidates) detail::require(b > 0.0, "bandwidth candidates must be positive");
    for (double r : regularizer_candidates) detail::require(r > 0.0, "regularizer candidates must be positive");
    detail::require(max_centers >= 1, "max_centers must be >= 1");
    detail::require(cv_folds >= 1, "cv_folds must be >= 1");
    detail::require(!clip_ceiling || *clip_ceiling > 0.0, "clip ceiling must be positive");
    detail::require(median_sample >= 2, "median_sample must be >= 2");
  }
};

struct DensityRatioModel {
  Matrix centers;  // b x d
  double bandwidth = 1.0;
  Vector coefficients;  // b, all >= 0
  std::optional<double> clip_ceiling;

  // Selection diagnostics.
  double regularizer = 0.0;
  double cv_objective = 0.0;

  Index dimension() const { return centers.cols(); }
};

namespace detail {

/// exp(-|x_i - c_l|^2 / (2 sigma^2)) for every (row, center) pair.
inline Matrix gaussian_design(const Eigen::Ref<const Matrix>& rows,
                              const Eigen::Ref<const Matrix>& centers, double bandwidth) {
  const Vector row_sq = rows.rowwise().squaredNorm();
  const Vector center_sq = centers.rowwise().squaredNorm();
  Matrix dist = (-2.0 * rows * centers.transpose()).colwise() + row_sq;
  dist.rowwise() += center_sq.transpose();
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  return (dist.array().max(0.0) * scale).exp().matrix();
}

inline Matrix take_rows(const Eigen::Ref<const Matrix>& m, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(idx[i]));
  return out;
}

inline double median_of(std::vector<double>& values) {
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(values.begin(), mid));
}

inline double median_pairwise_distance(const Eigen::Ref<const Matrix>& pooled, int max_rows, Rng& rng) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(pooled.rows()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  if (rows.size() > static_cast<std::size_t>(max_rows)) {
    rng.shuffle(rows);
    rows.resize(static_cast<std::size_t>(max_rows));
    std::sort(rows.begin(), rows.end());
  }
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  double positive_sum = 0.0;
  std::size_t positive_count = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const double dist = (pooled.row(static_cast<Index>(rows[i])) - pooled.row(static_cast<Index>(rows[j]))).norm();
      dists.push_back(dist);
      if (dist > 0.0) {
        positive_sum += dist;
        ++positive_count;
      }
    }
  }
  if (positive_count == 0) throw DegenerateData("all pairwise distances are zero; bandwidth undefined");
  const double median = median_of(dists);
  // More than half the pairs coincide: fall back to the mean positive distance.
  return median > 0.0 ? median : positive_sum / static_cast<double>(positive_count);
}

inline double median_cross_distance(const Eigen::Ref<const Matrix>& rows, const Eigen::Ref<const Matrix>& centers) {
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(rows.rows() * centers.rows()));
  double positive_sum = 0.0;
  std::size_t positive_count = 0;
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index l = 0; l < centers.rows(); ++l) {
      const double dist = (rows.row(i) - centers.row(l)).norm();
      dists.push_back(dist);
      if (dist > 0.0) {
        positive_sum += dist;
        ++positive_count;
      }
    }
  }
  if (positive_count == 0) throw DegenerateData("all source-to-center distances are zero; bandwidth undefined");
  const double median = median_of(dists);
  return median > 0.0 ? median : positive_sum / static_cast<double>(positive_count);
}

inline Vector solve_ulsif(const Matrix& source_design, const Matrix& target_design, double rho) {
  Matrix system = source_design.transpose() * source_design / static_cast<double>(source_design.rows());
  system.diagonal().array() += rho;
  const Vector mean_target = target_design.colwise().mean().transpose();
  const Vector alpha = system.llt().solve(mean_target);
  return alpha.cwiseMax(0.0);
}

inline double ulsif_objective(const Matrix& source_design, const Matrix& target_design,
                              const Vector& alpha) {
  const Vector rs = source_design * alpha;
  const Vector rt = target_design * alpha;
  return 0.5 * rs.squaredNorm() / static_cast<double>(rs.size()) - rt.mean();
}

}  // namespace detail

inline Vector evaluate_ratio(const DensityRatioModel& model, const Eigen::Ref<const Matrix>& features) {
  detail::require_same(features.cols(), model.dimension(), "feature dimension does not match ratio model");
  if (features.rows() == 0) return Vector(0);
  Vector out = (detail::gaussian_design(features, model.centers, model.bandwidth) * model.coefficients)
                   .cwiseMax(0.0);
  if (model.clip_ceiling) out = out.cwiseMin(*model.clip_ceiling);
  return out;
}

inline DensityRatioModel fit_ulsif(const Eigen::Ref<const Matrix>& target_features,
                                   const Eigen::Ref<const Matrix>& source_de_features,
                                   const UlsifConfig& config, std::uint64_t rng_seed) {
  config.validate();
  detail::require_same(source_de_features.cols(), target_features.cols(),
                       "target and source feature dimensions differ");
  const Index n_target = target_features.rows();
  const Index n_source = source_de_features.rows();
  if (n_target < 2) throw DegenerateData("uLSIF needs at least 2 target rows");
  if (n_source < 2) throw DegenerateData("uLSIF needs at least 2 source rows");
  if (!target_features.allFinite() || !source_de_features.allFinite()) {
    throw InvalidArgument("uLSIF inputs must be finite");
  }

  Rng rng(rng_seed);
  auto center_order = rng.permutation(static_cast<std::size_t>(n_target));
  center_order.resize(std::min<std::size_t>(center_order.size(), static_cast<std::size_t>(config.max_centers)));

  DensityRatioModel model;
  model.centers = detail::take_rows(target_features, center_order);
  model.clip_ceiling = config.clip_ceiling;

  double median = 0.0;
  if (config.bandwidth_reference == BandwidthReference::PooledPairs) {
    Matrix pooled(n_target + n_source, target_features.cols());
    pooled << target_features, source_de_features;
    median = detail::median_pairwise_distance(pooled, config.median_sample, rng);
  } else {
    median = detail::median_cross_distance(source_de_features, model.centers);
  }

  // Fold labels, assigned round-robin over a seeded permutation.
  const int folds = static_cast<int>(std::min<Index>({config.cv_folds, n_target, n_source}));
  std::vector<int> target_fold(static_cast<std::size_t>(n_target));
  std::vector<int> source_fold(static_cast<std::size_t>(n_source));
  {
    const auto pt = rng.permutation(target_fold.size());
    for (std::size_t i = 0; i < pt.size(); ++i) target_fold[pt[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    const auto ps = rng.permutation(source_fold.size());
    for (std::size_t i = 0; i < ps.size(); ++i) source_fold[ps[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }
  auto rows_where = [](const std::vector<int>& fold_of, int k, bool inside) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if ((fold_of[i] == k) == inside) idx.push_back(i);
    }
    return idx;
  };

  double best_score = std::numeric_limits<double>::infinity();
  double best_sigma = 0.0;
  double best_rho = 0.0;
  for (double multiplier : config.bandwidth_candidates) {
    const double sigma = multiplier * median;
    const Matrix target_design = detail::gaussian_design(target_features, model.centers, sigma);
    const Matrix source_design = detail::gaussian_design(source_de_features, model.centers, sigma);
    for (double rho : config.regularizer_candidates) {
      double score = 0.0;
      if (folds < 2) {
        score = detail::ulsif_objective(source_design, target_design,
                                        detail::solve_ulsif(source_design, target_design, rho));
      } else {
        for (int k = 0; k < folds; ++k) {
          const Matrix st = detail::take_rows(source_design, rows_where(source_fold, k, false));
          const Matrix tt = detail::take_rows(target_design, rows_where(target_fold, k, false));
          const Matrix sv = detail::take_rows(source_design, rows_where(source_fold, k, true));
          const Matrix tv = detail::take_rows(target_design, rows_where(target_fold, k, true));
          score += detail::ulsif_objective(sv, tv, detail::solve_ulsif(st, tt, rho));
        }
        score /= folds;
      }
      const bool better = score < best_score ||
                          (score == best_score && (sigma > best_sigma || (sigma == best_sigma && rho > best_rho)));
      if (better) {
        best_score = score;
        best_sigma = sigma;
        best_rho = rho;
      }
    }
  }
  if (!std::isfinite(best_score)) throw DegenerateData("uLSIF cross-validation produced no finite score");

  const Matrix target_design = detail::gaussian_design(target_features, model.centers, best_sigma);
  const Matrix source_design = detail::gaussian_design(source_de_features, model.centers, best_sigma);
  model.bandwidth = best_sigma;
  model.regularizer = best_rho;
  model.cv_objective = best_score;
  model.coefficients = detail::solve_ulsif(source_design, target_design, best_rho);
  return model;
}

}  // namespace fedcsa
