#pragma once

// End-to-end method runners: the three federated estimators, the labeled
// reference, the weighted target model and its evaluation.

#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fedcsa/core.hpp"
#include "fedcsa/data.hpp"
#include "fedcsa/federation.hpp"
#include "fedcsa/regression.hpp"
#include "fedcsa/wire.hpp"

namespace fedcsa {

struct WeightedModel {
  struct Component {
    double alpha = 0.0;
    LinearModel model;
  };
  std::vector<Component> components;
  Hyperparameter theta;
};

inline Vector weighted_predict(const WeightedModel& model, const Eigen::Ref<const Matrix>& features) {
  if (model.components.empty()) throw InvalidArgument("weighted model has no components");
  Vector out = Vector::Zero(features.rows());
  for (const auto& c : model.components) out += c.alpha * predict(c.model, features);
  return out;
}

inline double mae(const Eigen::Ref<const Vector>& predictions, const Eigen::Ref<const Vector>& truths) {
  if (predictions.size() == 0 || truths.size() == 0) throw EmptyInput("mae needs nonempty vectors");
  detail::require_same(predictions.size(), truths.size(), "prediction and truth lengths differ");
  return (predictions - truths).cwiseAbs().mean();
}

struct FederatedOptions {
  NodeOptions node;
  // Run source nodes on their own threads. Output does not depend on it.
  bool parallel = false;
  // When set, receives every encoded message that crosses a node boundary.
  wire::Transcript* transcript = nullptr;
};

namespace detail {

inline std::vector<Hyperparameter> dedup_grid(const std::vector<Hyperparameter>& grid) {
  if (grid.empty()) throw InvalidArgument("hyperparameter grid is empty");
  const std::set<Hyperparameter> unique(grid.begin(), grid.end());
  return {unique.begin(), unique.end()};
}

/// Everything a source does after receiving the broadcast bytes. Returns
/// the encoded reports; hyperparameters the learner cannot fit are skipped.
inline std::vector<std::string> run_source_node(const LabeledDataset& dataset, const std::string& broadcast_bytes,
                                                EstimatorKind kind, Learner learner,
                                                const std::vector<Hyperparameter>& grid, std::uint64_t master_seed,
                                                const NodeOptions& options) {
  const TargetBroadcast broadcast = wire::decode_broadcast(broadcast_bytes);
  const std::uint64_t node_seed = derive_seed(master_seed, "node/" + dataset.name);
  SourceNode node = split_source(dataset, options.fractions, derive_seed(node_seed, "split"));
  if (kind != EstimatorKind::Naive) {
    node.fit_ratio(broadcast, options.ulsif, derive_seed(node_seed, "ulsif"));
  }
  std::vector<std::string> out;
  for (const auto& theta : grid) {
    try {
      out.push_back(wire::encode(source_round(node, broadcast, theta, learner, kind, options)));
    } catch (const SingularSystem&) {
    }
  }
  return out;
}

}  // namespace detail

inline WeightedModel run_federated_method(const std::vector<LabeledDataset>& sources,
                                          const Eigen::Ref<const Matrix>& target_features, EstimatorKind kind,
                                          Learner learner, const std::vector<Hyperparameter>& theta_grid,
                                          std::uint64_t seed, const FederatedOptions& options = {}) {
  if (sources.empty()) throw InvalidArgument("at least one source is required");
  const auto grid = detail::dedup_grid(theta_grid);
  std::set<std::string> names;
  for (const auto& s : sources) {
    if (!names.insert(s.name).second) throw InvalidArgument("source names must be unique ('" + s.name + "')");
    if (s.rows() < 3) throw TooFewRows("source '" + s.name + "' needs at least 3 rows");
    detail::require_same(s.dimension(), target_features.cols(), "source and target dimensions differ");
  }

  const std::string broadcast_bytes = wire::encode(TargetBroadcast{target_features});
  std::vector<std::vector<std::string>> outboxes(sources.size());
  if (options.parallel && sources.size() > 1) {
    std::vector<std::future<std::vector<std::string>>> running;
    for (const auto& s : sources) {
      if (options.transcript) options.transcript->record(broadcast_bytes);
      running.push_back(std::async(std::launch::async, [&, kind, learner] {
        return detail::run_source_node(s, broadcast_bytes, kind, learner, grid, seed, options.node);
      }));
    }
    for (std::size_t j = 0; j < running.size(); ++j) outboxes[j] = running[j].get();
  } else {
    for (std::size_t j = 0; j < sources.size(); ++j) {
      if (options.transcript) options.transcript->record(broadcast_bytes);
      outboxes[j] = detail::run_source_node(sources[j], broadcast_bytes, kind, learner, grid, seed, options.node);
    }
  }

  // Coordinator side: only decoded bytes from here on.
  std::map<Hyperparameter, std::vector<SourceReport>> by_theta;
  for (const auto& outbox : outboxes) {
    for (const auto& bytes : outbox) {
      if (options.transcript) options.transcript->record(bytes);
      SourceReport r = wire::decode_report(bytes);
      by_theta[r.theta].push_back(std::move(r));
    }
  }
  // A hyperparameter counts only if every source could fit at it.
  std::erase_if(by_theta, [&](const auto& entry) { return entry.second.size() != sources.size(); });
  if (by_theta.empty()) throw SingularSystem("no hyperparameter in the grid is feasible at every source");

  const CoordinationResult coord = coordinate(std::move(by_theta), kind);
  WeightedModel model;
  model.theta = coord.theta;
  for (std::size_t j = 0; j < coord.models.size(); ++j) {
    model.components.push_back({coord.weights.alphas[j], coord.models[j]});
  }
  return model;
}

struct ReferenceOptions {
  double train_fraction = 0.5;
  RidgeOptions ridge;
};

/// Labeled-target oracle: select theta on a held-out half, keep the model
/// trained on the other half.
inline WeightedModel run_reference(const LabeledDataset& target_labeled, Learner learner,
                                   const std::vector<Hyperparameter>& theta_grid, std::uint64_t seed,
                                   const ReferenceOptions& options = {}) {
  if (target_labeled.rows() < 4) throw TooFewRows("reference needs at least 4 labeled target rows");
  const auto grid = detail::dedup_grid(theta_grid);
  const auto [train, val] = train_test_split(target_labeled, options.train_fraction, derive_seed(seed, "reference"));
  double best = std::numeric_limits<double>::infinity();
  std::optional<WeightedModel> chosen;
  for (const auto& theta : grid) {
    LinearModel m;
    try {
      m = learner == Learner::Ridge
              ? fit_ridge(train.features, train.outputs, theta, options.ridge)
              : fit_flattened_iw_ls(train.features, train.outputs, Vector::Ones(train.rows()), theta, options.ridge).model;
    } catch (const SingularSystem&) {
      continue;
    }
    const Vector pred = predict(m, val.features);
    double loss = 0.0;
    for (Index i = 0; i < val.rows(); ++i) loss += square_loss(pred(i), val.outputs(i));
    loss /= static_cast<double>(val.rows());
    if (loss < best || !chosen) {
      best = loss;
      chosen = WeightedModel{{{1.0, std::move(m)}}, theta};
    }
  }
  if (!chosen) throw SingularSystem("reference learner is singular at every hyperparameter");
  return *chosen;
}

enum class Method { FedIW, FedDA, Naive, Reference };

inline constexpr Method kAllMethods[] = {Method::FedIW, Method::FedDA, Method::Naive, Method::Reference};

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::FedIW: return "FedIW";
    case Method::FedDA: return "FedDA";
    case Method::Naive: return "Naive";
    case Method::Reference: return "Reference";
  }
  return "?";
}

struct MethodResult {
  std::string method;
  WeightedModel weighted_model;
  double test_mae = 0.0;
  Hyperparameter chosen_theta;
};

struct RunSettings {
  Learner learner = Learner::Ridge;
  std::vector<Hyperparameter> theta_grid = uniform_grid(21);
  FederatedOptions federated;
  ReferenceOptions reference;
};

/// The only place that unlocks target labels: test rows for scoring and the
/// labeled target sample for the Reference method.
class MethodEvaluator {
 public:
  static const Vector& labels(const TargetDomain& target) { return target.labels.reveal(EvaluationPass{}); }

  static MethodResult run(Method method, const std::vector<LabeledDataset>& sources, const TargetDomain& target,
                          const TargetDomain& test, const RunSettings& settings, std::uint64_t seed) {
    WeightedModel model;
    if (method == Method::Reference) {
      const LabeledDataset labeled(target.features, labels(target), target.name);
      model = run_reference(labeled, settings.learner, settings.theta_grid, seed, settings.reference);
    } else {
      const EstimatorKind kind = method == Method::FedIW   ? EstimatorKind::FedIW
                                 : method == Method::FedDA ? EstimatorKind::FedDA
                                                           : EstimatorKind::Naive;
      model = run_federated_method(sources, target.features, kind, settings.learner, settings.theta_grid, seed,
                                   settings.federated);
    }
    return score(method, std::move(model), test);
  }

  static MethodResult score(Method method, WeightedModel model, const TargetDomain& test) {
    MethodResult result;
    result.method = std::string(method_name(method));
    result.test_mae = mae(weighted_predict(model, test.features), labels(test));
    result.chosen_theta = model.theta;
    result.weighted_model = std::move(model);
    return result;
  }
};

}  // namespace fedcsa
