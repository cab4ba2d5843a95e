// Long-format marker data: stacking two markers into one response vector,
// occasion indexing on an equally spaced visit grid, baseline differencing,
// and per-subject block design matrices with a piecewise-linear time basis.
#ifndef BIVLMM_DATA_HPP
#define BIVLMM_DATA_HPP

#include <Eigen/Dense>
#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bivlmm/types.hpp"

namespace bivlmm {

// One observation: a marker value for a subject at a scheduled visit.
struct LongRecord {
  std::string subject_id;
  Marker marker = Marker::M1;
  double time = 0.0;  // months
  int occasion = 0;   // non-negative index on the visit grid
  double response = 0.0;
};

struct SubjectData {
  std::string id;
  std::vector<LongRecord> records;
};

// Records grouped by subject. Occasions within a subject may have gaps
// (intermittent missingness); times must sit on the grid
// occasion * occasion_spacing + grid_origin.
struct StackedDataset {
  std::vector<SubjectData> subjects;
  double occasion_spacing = 0.0;
  double grid_origin = 0.0;

  std::size_t n_records() const;
};

// Named time-transform regressors. PiecePre/PiecePost are the two pieces of
// the change-point basis: min(t, tau) and max(t - tau, 0).
enum class TimeTerm { Time, PiecePre, PiecePost };

const char* to_string(TimeTerm t);

struct DesignSpec {
  double tau = 4.0;               // change-point time, months
  bool include_intercept = false;
  // Terms per marker; index 0 = M1, index 1 = M2.
  std::array<std::vector<TimeTerm>, 2> terms = {
      std::vector<TimeTerm>{TimeTerm::PiecePre, TimeTerm::PiecePost},
      std::vector<TimeTerm>{TimeTerm::PiecePre, TimeTerm::PiecePost}};

  void validate() const;  // tau > 0, unique terms per marker
  int columns_per_marker(Marker m) const;
};

// One subject's stacked response and block design matrices. Rows are
// canonical: marker-major, occasion-ascending. Marker-1 columns are zero on
// marker-2 rows and vice versa.
struct SubjectDesign {
  std::string subject_id;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::MatrixXd Z;  // same columns as X; ignored by models without random effects
  std::vector<Marker> marker_of_row;
  std::vector<int> occasion_of_row;
  std::vector<double> time_of_row;

  int rows() const { return static_cast<int>(y.size()); }
};

// Change-point basis: T1 = min(t, tau), T2 = max(t - tau, 0).
// Throws std::invalid_argument for t < 0 or tau <= 0.
std::pair<double, double> piecewise_time(double t, double tau);

// One input row of the wide layout; a missing marker value drops that row's
// record in the stacked output.
struct WideRow {
  std::string subject_id;
  double time = 0.0;
  std::optional<double> m1;
  std::optional<double> m2;
};

StackedDataset stack_wide(const std::vector<WideRow>& rows, double occasion_spacing);

// Long layout: occasions are recomputed from time on the common grid.
StackedDataset stack_long(const std::vector<LongRecord>& records, double occasion_spacing);

// Inverse of stack_wide up to row order: one wide row per (subject, time).
std::vector<WideRow> unstack(const StackedDataset& data);

struct BaselineDiffResult {
  StackedDataset data;
  // Subjects dropped because a marker series had post-baseline records but no
  // occasion-0 baseline value.
  std::vector<std::string> excluded_subjects;
};

// Subtract each subject-marker's occasion-0 value from its later responses
// and remove the baseline rows.
BaselineDiffResult baseline_difference(const StackedDataset& data);

// Per-subject block designs for the given scope. Record order in the input
// does not matter; rows come out canonical.
std::vector<SubjectDesign> build_design(const StackedDataset& data, const DesignSpec& spec,
                                        Scope scope = Scope::Bivariate);

std::vector<std::string> fixed_effect_names(const DesignSpec& spec, Scope scope);

// CSV schemas accepted by the command line front end.
struct WideSchema {
  std::string subject_col;
  std::string time_col;
  std::array<std::string, 2> marker_cols;  // first column maps to M1
};

struct LongSchema {
  std::string subject_col;
  std::string marker_col;   // values 0 (M1) and 1 (M2)
  std::string time_col;
  std::string response_col;
};

std::vector<WideRow> read_wide_csv(std::istream& in, const WideSchema& schema);
std::vector<LongRecord> read_long_csv(std::istream& in, const LongSchema& schema);
void write_wide_csv(std::ostream& out, const StackedDataset& data, const WideSchema& schema);

}  // namespace bivlmm

#endif  // BIVLMM_DATA_HPP
