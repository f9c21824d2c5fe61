#pragma once

// Node-level structure of the federated procedure.
//
// The coordinator (target) broadcasts its unlabeled features. Every source
// node splits its private data into density-estimation, training and
// validation parts, fits a density ratio once, and for each hyperparameter
// returns a SourceReport: a risk estimate, its local model, a divergence and
// its validation count. Reports are the only thing that leaves a node, and
// they always cross the boundary as encoded bytes (see wire.hpp).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fedcsa/core.hpp"
#include "fedcsa/data.hpp"
#include "fedcsa/density_ratio.hpp"
#include "fedcsa/estimators.hpp"
#include "fedcsa/random.hpp"
#include "fedcsa/regression.hpp"

namespace fedcsa {

enum class EstimatorKind { FedIW, FedDA, Naive };

inline std::string_view kind_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::FedIW: return "FedIW";
    case EstimatorKind::FedDA: return "FedDA";
    case EstimatorKind::Naive: return "Naive";
  }
  return "?";
}

struct TargetBroadcast {
  Matrix target_features;
};

struct SourceReport {
  std::string source_id;
  Hyperparameter theta;
  double risk_estimate = 0.0;
  LinearModel model;
  double divergence = 0.0;  // only meaningful for FedDA; 0 otherwise
  Index n_val = 0;
};

struct SplitIndices {
  std::vector<std::size_t> de;
  std::vector<std::size_t> tr;
  std::vector<std::size_t> val;
};

struct SplitFractions {
  double de = 1.0 / 3.0;
  double tr = 1.0 / 3.0;
  double val = 1.0 / 3.0;
};

struct NodeOptions {
  SplitFractions fractions;
  UlsifConfig ulsif;
  RidgeOptions ridge;
  double div_floor = kDefaultDivFloor;
};

/// A source's private data with its three-way split. Nothing in here is
/// ever encoded; only SourceReports leave the node.
class SourceNode {
 public:
  SourceNode(std::string source_id, LabeledDataset dataset, SplitIndices split)
      : id_(std::move(source_id)), dataset_(std::move(dataset)), split_(std::move(split)) {}

  const std::string& id() const { return id_; }
  const SplitIndices& split() const { return split_; }
  Index dimension() const { return dataset_.dimension(); }
  const std::optional<DensityRatioModel>& ratio_model() const { return ratio_model_; }

  /// Fits r = p_target / p_source on the density-estimation part.
  void fit_ratio(const TargetBroadcast& broadcast, const UlsifConfig& config, std::uint64_t seed) {
    const LabeledDataset de = subset(dataset_, split_.de, id_ + "_de");
    ratio_model_ = fit_ulsif(broadcast.target_features, de.features, config, seed);
  }

  /// Installs a ratio model fitted elsewhere, e.g. a known analytic ratio.
  void set_ratio_model(DensityRatioModel model) {
    detail::require_same(model.dimension(), dimension(), "ratio model dimension does not match source data");
    ratio_model_ = std::move(model);
  }

  LabeledDataset part(const std::vector<std::size_t>& rows, std::string_view tag) const {
    return subset(dataset_, rows, id_ + "_" + std::string(tag));
  }

 private:
  std::string id_;
  LabeledDataset dataset_;
  SplitIndices split_;
  std::optional<DensityRatioModel> ratio_model_;
};

namespace detail {

inline std::vector<std::size_t> split_sizes(std::size_t n, const SplitFractions& f) {
  const double fractions[3] = {f.de, f.tr, f.val};
  std::vector<std::size_t> sizes(3);
  std::size_t total = 0;
  for (int k = 0; k < 3; ++k) {
    sizes[k] = static_cast<std::size_t>(std::llround(fractions[k] * static_cast<double>(n)));
    total += sizes[k];
  }
  auto largest = [&] { return static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin()); };
  while (total > n) {
    --sizes[largest()];
    --total;
  }
  while (total < n) {
    // Hand leftovers to the part with the largest requested fraction.
    const auto k = static_cast<std::size_t>(std::max_element(fractions, fractions + 3) - fractions);
    ++sizes[k];
    ++total;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    while (sizes[k] == 0) {
      --sizes[largest()];
      ++sizes[k];
    }
  }
  return sizes;
}

}  // namespace detail

inline SourceNode split_source(const LabeledDataset& dataset, const SplitFractions& fractions,
                               std::uint64_t rng_seed) {
  detail::require(fractions.de > 0.0 && fractions.tr > 0.0 && fractions.val > 0.0, "split fractions must be positive");
  detail::require(std::abs(fractions.de + fractions.tr + fractions.val - 1.0) <= 1e-9, "split fractions must sum to 1");
  const auto n = static_cast<std::size_t>(dataset.rows());
  if (n < 3) throw TooFewRows("source '" + dataset.name + "' needs at least 3 rows to split");
  const auto sizes = detail::split_sizes(n, fractions);
  Rng rng(rng_seed);
  const auto order = rng.permutation(n);
  SplitIndices split;
  auto it = order.begin();
  split.de.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  split.tr.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  split.val.assign(it, order.end());
  for (auto* part : {&split.de, &split.tr, &split.val}) std::sort(part->begin(), part->end());
  return SourceNode(dataset.name, dataset, std::move(split));
}

/// Trains on the tr part, evaluates on the val part and summarises.
/// Throws SingularSystem when the learner cannot be fitted at this theta.
inline SourceReport source_round(const SourceNode& node, const TargetBroadcast& broadcast, Hyperparameter theta,
                                 Learner learner, EstimatorKind kind, const NodeOptions& options = {}) {
  detail::require_same(broadcast.target_features.cols(), node.dimension(),
                       "broadcast dimension does not match source data");
  const bool use_ratio = kind != EstimatorKind::Naive;
  if (use_ratio && !node.ratio_model()) {
    throw InvalidArgument("source '" + node.id() + "' has no fitted density ratio");
  }
  const LabeledDataset train = node.part(node.split().tr, "tr");
  const LabeledDataset val = node.part(node.split().val, "val");

  LinearModel model;
  if (learner == Learner::Ridge) {
    model = fit_ridge(train.features, train.outputs, theta, options.ridge);
  } else {
    const Vector train_ratio =
        use_ratio ? evaluate_ratio(*node.ratio_model(), train.features) : Vector::Ones(train.rows());
    model = fit_flattened_iw_ls(train.features, train.outputs, train_ratio, theta, options.ridge).model;
  }

  const Vector predictions = predict(model, val.features);
  Vector losses(val.rows());
  for (Index i = 0; i < val.rows(); ++i) losses(i) = square_loss(predictions(i), val.outputs(i));
  Vector ratios = use_ratio ? evaluate_ratio(*node.ratio_model(), val.features) : Vector::Ones(val.rows());
  const ValidationEvaluation ev(std::move(ratios), std::move(losses));

  SourceReport report;
  report.source_id = node.id();
  report.theta = theta;
  report.model = std::move(model);
  report.n_val = ev.n_val();
  if (kind == EstimatorKind::FedDA) {
    const double eta = ev.n_val() >= 2 ? control_coefficient(ev) : 0.0;
    report.risk_estimate = cv_risk(ev, eta);
    report.divergence = divergence_estimate(ev, eta, options.div_floor);
  } else {
    report.risk_estimate = iw_risk(ev);
  }
  return report;
}

struct CoordinationResult {
  Hyperparameter theta;
  SourceWeights weights;
  std::vector<std::string> source_ids;  // sorted; indexes weights and models
  std::vector<LinearModel> models;
  std::map<Hyperparameter, double> aggregates;
};

/// Aggregates reports per theta, picks the argmin (ties to the smallest
/// theta) and returns the weights and models at that theta.
inline CoordinationResult coordinate(std::map<Hyperparameter, std::vector<SourceReport>> reports_per_theta,
                                     EstimatorKind kind) {
  if (reports_per_theta.empty()) throw InconsistentReports("no hyperparameter has reports");
  std::vector<std::string> ids;
  std::map<std::string, Index> n_val_of;
  Index dim = -1;
  for (auto& [theta, reports] : reports_per_theta) {
    std::sort(reports.begin(), reports.end(),
              [](const SourceReport& a, const SourceReport& b) { return a.source_id < b.source_id; });
    std::vector<std::string> these;
    for (const auto& r : reports) {
      these.push_back(r.source_id);
      if (r.theta != theta) throw InconsistentReports("report for '" + r.source_id + "' carries a different theta");
      if (dim < 0) dim = r.model.dimension();
      if (r.model.dimension() != dim) throw InconsistentReports("model dimension differs for '" + r.source_id + "'");
      if (r.n_val < 1) throw InconsistentReports("nonpositive n_val from '" + r.source_id + "'");
      auto [it, inserted] = n_val_of.emplace(r.source_id, r.n_val);
      if (!inserted && it->second != r.n_val) throw InconsistentReports("n_val changed across theta for '" + r.source_id + "'");
    }
    if (std::adjacent_find(these.begin(), these.end()) != these.end()) {
      throw InconsistentReports("duplicate source id in reports");
    }
    if (ids.empty()) {
      ids = these;
      if (ids.empty()) throw InconsistentReports("a hyperparameter has no reports");
    } else if (these != ids) {
      throw InconsistentReports("source set differs between hyperparameters");
    }
  }

  auto weights_at = [&](const std::vector<SourceReport>& reports) {
    std::vector<Index> n_vals;
    for (const auto& r : reports) n_vals.push_back(r.n_val);
    if (kind != EstimatorKind::FedDA) return sample_size_weights(n_vals);
    std::vector<double> divs;
    for (const auto& r : reports) divs.push_back(r.divergence);
    return source_weights(divs, n_vals);
  };

  CoordinationResult result;
  result.source_ids = ids;
  double best = std::numeric_limits<double>::infinity();
  const std::vector<SourceReport>* best_reports = nullptr;
  for (const auto& [theta, reports] : reports_per_theta) {
    std::vector<double> f;
    for (const auto& r : reports) f.push_back(r.risk_estimate);
    double aggregate;
    if (kind == EstimatorKind::FedDA) {
      aggregate = fed_dae(f, weights_at(reports));
    } else {
      std::vector<Index> n_vals;
      for (const auto& r : reports) n_vals.push_back(r.n_val);
      aggregate = fed_iwe(f, n_vals);
    }
    result.aggregates[theta] = aggregate;
    if (aggregate < best || best_reports == nullptr) {
      best = aggregate;
      best_reports = &reports;
      result.theta = theta;
    }
  }
  result.weights = weights_at(*best_reports);
  for (const auto& r : *best_reports) result.models.push_back(r.model);
  return result;
}

}  // namespace fedcsa
