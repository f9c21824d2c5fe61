#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fedcsa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error hierarchy. Every failure the library reports derives from Error so
// callers can catch one type; the subclasses name the failure condition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FEDCSA_DEFINE_ERROR(Name)                        \
  class Name : public Error {                            \
   public:                                               \
    explicit Name(const std::string& what)               \
        : Error(std::string(#Name ": ") + what) {}       \
  }

FEDCSA_DEFINE_ERROR(DimensionMismatch);
FEDCSA_DEFINE_ERROR(SingularSystem);
FEDCSA_DEFINE_ERROR(DegenerateData);
FEDCSA_DEFINE_ERROR(EmptyValidation);
FEDCSA_DEFINE_ERROR(EmptyInput);
FEDCSA_DEFINE_ERROR(TooFewRows);
FEDCSA_DEFINE_ERROR(InconsistentReports);
FEDCSA_DEFINE_ERROR(MalformedCsv);
FEDCSA_DEFINE_ERROR(FileNotFound);
FEDCSA_DEFINE_ERROR(InvalidArgument);
FEDCSA_DEFINE_ERROR(MalformedMessage);

#undef FEDCSA_DEFINE_ERROR

namespace detail {

inline void require(bool cond, const char* what) {
  if (!cond) throw InvalidArgument(what);
}

inline void require_same(Index a, Index b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + " (" + std::to_string(a) +
                            " vs " + std::to_string(b) + ")");
  }
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

}  // namespace detail

}  // namespace fedcsa
