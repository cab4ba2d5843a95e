// Shared enums and error types for the bivariate longitudinal model library.
#ifndef BIVLMM_TYPES_HPP
#define BIVLMM_TYPES_HPP

#include <stdexcept>
#include <string>

namespace bivlmm {

// The two response variables, stacked into one vector per subject.
// M1 corresponds to indicator value 0, M2 to indicator value 1.
enum class Marker : int { M1 = 0, M2 = 1 };

inline const char* to_string(Marker m) { return m == Marker::M1 ? "M1" : "M2"; }

// Which markers a model (or design) covers. Univariate scopes restrict
// the design and all covariance structures to a single marker.
enum class Scope { Bivariate, M1Only, M2Only };

inline const char* to_string(Scope s) {
  switch (s) {
    case Scope::Bivariate: return "bivariate";
    case Scope::M1Only: return "m1_only";
    default: return "m2_only";
  }
}

inline bool scope_has(Scope s, Marker m) {
  if (s == Scope::Bivariate) return true;
  return (s == Scope::M1Only) == (m == Marker::M1);
}

inline int scope_marker_count(Scope s) { return s == Scope::Bivariate ? 2 : 1; }

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input data (CSV content, stacking, grids).
class DataError : public Error {
 public:
  using Error::Error;
};

class DuplicateObservationError : public DataError {
 public:
  using DataError::DataError;
};

class GridViolationError : public DataError {
 public:
  using DataError::DataError;
};

class CsvParseError : public DataError {
 public:
  using DataError::DataError;
};

// Likelihood evaluation failed at the current parameter value.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::string subject_id)
      : Error(what), subject_id_(std::move(subject_id)) {}
  const std::string& subject_id() const { return subject_id_; }

 private:
  std::string subject_id_;
};

// Marginal covariance numerically singular (condition number above 1e12).
class NearSingularError : public EvaluationError {
 public:
  explicit NearSingularError(const std::string& what, std::string subject_id = std::string())
      : EvaluationError(what, std::move(subject_id)) {}
};

class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

// Internal shape mismatch between designs and covariance structures.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class NestingViolationError : public Error {
 public:
  using Error::Error;
};

class InvalidBundleError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace bivlmm

#endif  // BIVLMM_TYPES_HPP
