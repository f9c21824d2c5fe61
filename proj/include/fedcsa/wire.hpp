#pragma once

// Wire format for messages crossing a node boundary: one JSON object per
// message, keys sorted, every field named. Doubles are written in shortest
// round-trip form, so decode(encode(m)) reproduces m bit for bit. Decoders
// reject unknown or missing fields, which keeps the schema exhaustive.

#include <cmath>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedcsa/federation.hpp"

namespace fedcsa::wire {

using Json = nlohmann::json;

inline constexpr int kVersion = 1;

inline const std::set<std::string>& broadcast_fields() {
  static const std::set<std::string> fields{"type", "version", "rows", "cols", "features"};
  return fields;
}

inline const std::set<std::string>& report_fields() {
  static const std::set<std::string> fields{"type",  "version",    "source_id", "theta", "risk_estimate",
                                            "model", "divergence", "n_val"};
  return fields;
}

inline const std::set<std::string>& model_fields() {
  static const std::set<std::string> fields{"weights", "intercept"};
  return fields;
}

namespace detail {

inline double finite(double v, const char* field) {
  if (!std::isfinite(v)) throw MalformedMessage(std::string("non-finite value in field '") + field + "'");
  return v;
}

inline void expect_fields(const Json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw MalformedMessage(std::string(what) + " is not an object");
  std::set<std::string> present;
  for (const auto& item : j.items()) present.insert(item.key());
  if (present != allowed) throw MalformedMessage(std::string(what) + " has unexpected or missing fields");
}

inline double number(const Json& j, const char* field) {
  const Json& v = j.at(field);
  if (!v.is_number()) throw MalformedMessage(std::string("field '") + field + "' is not a number");
  return finite(v.get<double>(), field);
}

}  // namespace detail

inline std::string encode(const TargetBroadcast& m) {
  const Matrix& x = m.target_features;
  Json features = Json::array();
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index k = 0; k < x.cols(); ++k) features.push_back(detail::finite(x(i, k), "features"));
  }
  Json j{{"type", "TargetBroadcast"}, {"version", kVersion}, {"rows", x.rows()}, {"cols", x.cols()},
         {"features", std::move(features)}};
  return j.dump();
}

inline std::string encode(const SourceReport& m) {
  Json weights = Json::array();
  for (Index k = 0; k < m.model.weights.size(); ++k) weights.push_back(detail::finite(m.model.weights(k), "weights"));
  Json j{{"type", "SourceReport"},
         {"version", kVersion},
         {"source_id", m.source_id},
         {"theta", m.theta.value()},
         {"risk_estimate", detail::finite(m.risk_estimate, "risk_estimate")},
         {"model", {{"weights", std::move(weights)}, {"intercept", detail::finite(m.model.intercept, "intercept")}}},
         {"divergence", detail::finite(m.divergence, "divergence")},
         {"n_val", m.n_val}};
  return j.dump();
}

inline Json parse(const std::string& bytes, const char* type) {
  Json j;
  try {
    j = Json::parse(bytes);
  } catch (const Json::exception& e) {
    throw MalformedMessage(std::string("cannot parse message: ") + e.what());
  }
  if (!j.is_object() || !j.contains("type") || j.at("type") != type) {
    throw MalformedMessage(std::string("expected a ") + type + " message");
  }
  if (j.value("version", -1) != kVersion) throw MalformedMessage("unsupported message version");
  return j;
}

inline TargetBroadcast decode_broadcast(const std::string& bytes) {
  try {
    const Json j = parse(bytes, "TargetBroadcast");
    detail::expect_fields(j, broadcast_fields(), "TargetBroadcast");
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const Json& values = j.at("features");
    if (rows < 0 || cols < 0 || !values.is_array() || static_cast<Index>(values.size()) != rows * cols) {
      throw MalformedMessage("TargetBroadcast feature block has the wrong size");
    }
    TargetBroadcast m;
    m.target_features.resize(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index k = 0; k < cols; ++k) {
        m.target_features(i, k) = detail::finite(values.at(static_cast<std::size_t>(i * cols + k)).get<double>(), "features");
      }
    }
    return m;
  } catch (const Json::exception& e) {
    throw MalformedMessage(std::string("TargetBroadcast: ") + e.what());
  }
}

inline SourceReport decode_report(const std::string& bytes) {
  try {
    const Json j = parse(bytes, "SourceReport");
    detail::expect_fields(j, report_fields(), "SourceReport");
    detail::expect_fields(j.at("model"), model_fields(), "SourceReport.model");
    SourceReport m;
    m.source_id = j.at("source_id").get<std::string>();
    const double theta = detail::number(j, "theta");
    if (theta < 0.0 || theta > 1.0) throw MalformedMessage("theta outside [0, 1]");
    m.theta = Hyperparameter(theta);
    m.risk_estimate = detail::number(j, "risk_estimate");
    m.divergence = detail::number(j, "divergence");
    if (m.divergence < 0.0) throw MalformedMessage("negative divergence");
    m.n_val = j.at("n_val").get<Index>();
    if (m.n_val < 1) throw MalformedMessage("n_val must be positive");
    const Json& weights = j.at("model").at("weights");
    if (!weights.is_array()) throw MalformedMessage("model weights are not an array");
    m.model.weights.resize(static_cast<Index>(weights.size()));
    for (std::size_t k = 0; k < weights.size(); ++k) {
      m.model.weights(static_cast<Index>(k)) = detail::finite(weights.at(k).get<double>(), "weights");
    }
    m.model.intercept = detail::number(j.at("model"), "intercept");
    return m;
  } catch (const Json::exception& e) {
    throw MalformedMessage(std::string("SourceReport: ") + e.what());
  }
}

/// Every byte string that crossed a node boundary, in arrival order.
class Transcript {
 public:
  void record(std::string bytes) {
    std::lock_guard lock(mutex_);
    messages_.push_back(std::move(bytes));
  }
  std::vector<std::string> messages() const {
    std::lock_guard lock(mutex_);
    return messages_;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> messages_;
};

/// In-process channel: the message is encoded, optionally recorded, and the
/// receiver only ever sees the decoded bytes.
inline TargetBroadcast transmit(const TargetBroadcast& m, Transcript* transcript = nullptr) {
  std::string bytes = encode(m);
  if (transcript) transcript->record(bytes);
  return decode_broadcast(bytes);
}

inline SourceReport transmit(const SourceReport& m, Transcript* transcript = nullptr) {
  std::string bytes = encode(m);
  if (transcript) transcript->record(bytes);
  return decode_report(bytes);
}

}  // namespace fedcsa::wire
