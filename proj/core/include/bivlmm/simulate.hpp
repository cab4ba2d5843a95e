#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "bivlmm/covariance.hpp"
#include "bivlmm/data.hpp"

namespace bivlmm {

// Generating parameters for synthetic two-marker longitudinal data.
// Empty G / empty serial.C switch those components off.
struct TruthParams {
  DesignSpec design;
  Eigen::VectorXd beta;            // bivariate fixed effects, M1 block then M2
  Eigen::MatrixXd G;               // random-effect covariance (Z has the same columns as X)
  KroneckerAr1 serial;             // serial process; C is 2x2 when present
  std::vector<double> error_var;   // measurement error, {M1, M2}
};

struct SimulateOptions {
  int n_subjects = 100;
  int n_occasions = 6;
  double occasion_spacing = 1.0;
  // Explicit visit schedule (size n_occasions); empty means occasion * spacing.
  std::vector<double> times;
};

// Complete balanced dataset: every subject observed on both markers at every
// occasion. Subject i uses the derived stream derive_key(seed, i); within a
// stream the draws are consumed in a fixed order (random effects, then the
// serial process in row order, then measurement error in row order), so any
// subject's data can be regenerated independently of the others.
StackedDataset simulate(const TruthParams& truth, const SimulateOptions& options, uint64_t seed);

enum class MissingnessKind {
  Dropout,       // each marker series ends at its first dropout event
  Intermittent,  // each record independently missing
};

const char* to_string(MissingnessKind k);

struct MissingnessSpec {
  MissingnessKind kind = MissingnessKind::Intermittent;
  double rate = 0.0;  // per-occasion (dropout) or per-record (intermittent) probability
};

// Removes records completely at random given the observed schedule. Dropout
// never removes baseline (occasion 0) records; intermittent missingness can.
// Subjects left with no records are removed. Deterministic in `seed` and
// independent of the seed used to simulate the responses.
StackedDataset apply_mar_missingness(const StackedDataset& data, const MissingnessSpec& spec,
                                     uint64_t seed);

}  // namespace bivlmm
