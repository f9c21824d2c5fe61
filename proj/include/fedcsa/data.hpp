#pragma once

// Datasets, the synthetic covariate-shift scenarios, the Parkinson's
// telemonitoring loader and seeded splitting.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fedcsa/core.hpp"
#include "fedcsa/random.hpp"

namespace fedcsa {

struct LabeledDataset {
  Matrix features;
  Vector outputs;
  std::string name;

  LabeledDataset() = default;
  LabeledDataset(Matrix x, Vector y, std::string n)
      : features(std::move(x)), outputs(std::move(y)), name(std::move(n)) {
    detail::require_same(outputs.size(), features.rows(), "outputs do not match feature rows");
    if (!features.allFinite() || !outputs.allFinite()) throw InvalidArgument("dataset values must be finite");
  }

  Index rows() const { return features.rows(); }
  Index dimension() const { return features.cols(); }
};

inline LabeledDataset subset(const LabeledDataset& data, const std::vector<std::size_t>& rows,
                             std::string name) {
  Matrix x(static_cast<Index>(rows.size()), data.dimension());
  Vector y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Index>(i)) = data.features.row(static_cast<Index>(rows[i]));
    y(static_cast<Index>(i)) = data.outputs(static_cast<Index>(rows[i]));
  }
  return LabeledDataset(std::move(x), std::move(y), std::move(name));
}

class MethodEvaluator;

/// Token that unlocks target labels. Only the evaluator can mint one, so
/// code that trains federated methods has no way to read them.
class EvaluationPass {
  EvaluationPass() = default;
  friend class MethodEvaluator;
};

/// Target outputs held back from every federated code path.
class LabelVault {
 public:
  LabelVault() = default;
  explicit LabelVault(Vector labels) : labels_(std::move(labels)) {}

  const Vector& reveal(EvaluationPass) const {
    ++reveals_;
    return labels_;
  }
  Index size() const { return labels_.size(); }
  std::size_t reveal_count() const { return reveals_; }

 private:
  Vector labels_;
  mutable std::size_t reveals_ = 0;
};

/// Target data: features are public, labels sit in a vault.
struct TargetDomain {
  Matrix features;
  LabelVault labels;
  std::string name;

  Index rows() const { return features.rows(); }
};

inline TargetDomain make_target(LabeledDataset data) {
  TargetDomain t;
  t.features = std::move(data.features);
  t.labels = LabelVault(std::move(data.outputs));
  t.name = std::move(data.name);
  return t;
}

struct Scenario {
  TargetDomain target;                  // the unlabeled target sample
  TargetDomain test;                    // held-out target rows for MAE only
  std::vector<LabeledDataset> sources;
};

namespace detail {

inline constexpr int kSimulationDim = 10;

/// Rows from N(mean * 1, variance * I) with y | x ~ N(mean(x), 1).
inline LabeledDataset draw_gaussian_rows(Index n, double mean, double variance, std::uint64_t seed,
                                         std::string name) {
  Rng rng(seed);
  const double sd = std::sqrt(variance);
  Matrix x(n, kSimulationDim);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < kSimulationDim; ++k) x(i, k) = rng.normal(mean, sd);
  }
  for (Index i = 0; i < n; ++i) y(i) = x.row(i).mean() + rng.normal();
  return LabeledDataset(std::move(x), std::move(y), std::move(name));
}

inline Scenario make_scenario(Index n_target, Index n_test, std::uint64_t seed, std::string_view tag,
                              std::vector<std::pair<Index, std::pair<double, double>>> sources) {
  detail::require(n_target >= 1 && n_test >= 1, "scenario sizes must be positive");
  Scenario s;
  const std::string prefix(tag);
  s.target = make_target(draw_gaussian_rows(n_target, 0.0, 1.0, derive_seed(seed, prefix + "/target"), "target"));
  s.test = make_target(draw_gaussian_rows(n_test, 0.0, 1.0, derive_seed(seed, prefix + "/test"), "target_test"));
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const auto& [n, law] = sources[j];
    detail::require(n >= 1, "source sizes must be positive");
    const std::string name = "source" + std::to_string(j + 1);
    s.sources.push_back(draw_gaussian_rows(n, law.first, law.second, derive_seed(seed, prefix + "/" + name), name));
  }
  return s;
}

}  // namespace detail

inline constexpr Index kDefaultTestRows = 1000;

/// Target N(0, I), sources N(1, 3I) and N(5, 0.5I), all 10-dimensional.
inline Scenario gen_case1(Index n_target, Index n_1, Index n_2, std::uint64_t seed,
                          Index n_test = kDefaultTestRows) {
  return detail::make_scenario(n_target, n_test, seed, "case1", {{n_1, {1.0, 3.0}}, {n_2, {5.0, 0.5}}});
}

/// Target N(0, I) with 20 rows, sources N(c, I) with 50 rows and N(c + 1, I) with 40.
inline Scenario gen_case2(double c, std::uint64_t seed, Index n_test = kDefaultTestRows) {
  detail::require(c > 0.0, "case 2 shift must be positive");
  return detail::make_scenario(20, n_test, seed, "case2", {{50, {c, 1.0}}, {40, {c + 1.0, 1.0}}});
}

/// Seeded shuffle; the first ceil(fraction * n) rows go to train.
inline std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& data, double fraction,
                                                                  std::uint64_t seed) {
  detail::require(fraction > 0.0 && fraction < 1.0, "split fraction must lie in (0, 1)");
  const auto n = static_cast<std::size_t>(data.rows());
  if (n < 2) throw TooFewRows("train/test split needs at least 2 rows");
  auto n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  Rng rng(seed);
  const auto order = rng.permutation(n);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {subset(data, train, data.name + "_train"), subset(data, test, data.name + "_test")};
}

// -- Parkinson's telemonitoring ---------------------------------------------

inline constexpr int kParkinsonsColumns = 22;
inline constexpr int kParkinsonsVoiceColumns = 16;
inline constexpr int kParkinsonsTotalUpdrsColumn = 5;

struct ParkinsonsSubject {
  int subject_id = 0;
  LabeledDataset data;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

inline double parse_cell(std::string_view cell, std::size_t line_no, std::size_t column) {
  cell = trim(cell);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    throw MalformedCsv("row " + std::to_string(line_no) + ", column " + std::to_string(column + 1) +
                       ": non-numeric cell '" + std::string(cell) + "'");
  }
  return value;
}

}  // namespace detail

/// One dataset per subject, ordered by subject id, with the 16 voice
/// measurements as features and total_UPDRS as output. Values are raw.
inline std::vector<ParkinsonsSubject> load_parkinsons_raw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open '" + path.string() + "'");

  std::map<int, std::vector<std::vector<double>>> rows_by_subject;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != kParkinsonsColumns) {
      throw MalformedCsv("row " + std::to_string(line_no) + ": expected " + std::to_string(kParkinsonsColumns) +
                         " columns, found " + std::to_string(cells.size()));
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) values[c] = detail::parse_cell(cells[c], line_no, c);
    const double subject = values[0];
    if (subject != std::floor(subject)) {
      throw MalformedCsv("row " + std::to_string(line_no) + ": subject id is not an integer");
    }
    rows_by_subject[static_cast<int>(subject)].push_back(std::move(values));
  }
  if (!header_seen) throw MalformedCsv("file '" + path.string() + "' is empty");

  std::vector<ParkinsonsSubject> subjects;
  for (const auto& [id, rows] : rows_by_subject) {
    const auto n = static_cast<Index>(rows.size());
    Matrix x(n, kParkinsonsVoiceColumns);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      for (int k = 0; k < kParkinsonsVoiceColumns; ++k) {
        x(i, k) = r[static_cast<std::size_t>(kParkinsonsColumns - kParkinsonsVoiceColumns + k)];
      }
      y(i) = r[kParkinsonsTotalUpdrsColumn];
    }
    subjects.push_back({id, LabeledDataset(std::move(x), std::move(y), "subject" + std::to_string(id))});
  }
  return subjects;
}

/// z-scores features and outputs of every subject with statistics pooled
/// over all subjects except `target_subject`.
inline void standardize_by_sources(std::vector<ParkinsonsSubject>& subjects, int target_subject) {
  Index pooled_rows = 0;
  Index dim = -1;
  for (const auto& s : subjects) {
    if (dim < 0) dim = s.data.dimension();
    if (s.subject_id != target_subject) pooled_rows += s.data.rows();
  }
  if (pooled_rows < 2) throw TooFewRows("standardisation needs at least 2 source rows");
  Vector x_sum = Vector::Zero(dim);
  Vector x_sq = Vector::Zero(dim);
  double y_sum = 0.0;
  double y_sq = 0.0;
  for (const auto& s : subjects) {
    if (s.subject_id == target_subject) continue;
    x_sum += s.data.features.colwise().sum().transpose();
    x_sq += s.data.features.array().square().matrix().colwise().sum().transpose();
    y_sum += s.data.outputs.sum();
    y_sq += s.data.outputs.squaredNorm();
  }
  const double n = static_cast<double>(pooled_rows);
  const Vector x_mean = x_sum / n;
  Vector x_sd = ((x_sq / n).array() - x_mean.array().square()).max(0.0).sqrt();
  x_sd = (x_sd.array() > 0.0).select(x_sd, 1.0);
  const double y_mean = y_sum / n;
  double y_sd = std::sqrt(std::max(0.0, y_sq / n - y_mean * y_mean));
  if (!(y_sd > 0.0)) y_sd = 1.0;
  for (auto& s : subjects) {
    s.data.features = ((s.data.features.rowwise() - x_mean.transpose()).array().rowwise() /
                       x_sd.transpose().array())
                          .matrix();
    s.data.outputs = (s.data.outputs.array() - y_mean) / y_sd;
  }
}

inline std::vector<ParkinsonsSubject> load_parkinsons(const std::filesystem::path& path, int target_subject = 1) {
  auto subjects = load_parkinsons_raw(path);
  standardize_by_sources(subjects, target_subject);
  return subjects;
}

}  // namespace fedcsa
