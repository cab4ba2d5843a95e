#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "bivlmm/inference.hpp"
#include "run_config.hpp"

namespace bivlmm::cli {

// Human-readable numbers carry six significant digits; NaN prints as "NA".
std::string fmt6(double v);

ordered_json model_spec_to_json(const ModelSpec& spec);
ordered_json matrix_to_json(const Eigen::MatrixXd& m);

void write_fit_text(std::ostream& os, const FitResult& fit, const std::string& label);
ordered_json fit_to_json(const FitResult& fit, const std::string& label);

// Pulls the comparison inputs back out of a fit summary JSON file.
ModelSummaryRow summary_from_json(const ordered_json& j, const std::string& fallback_label);

void write_compare_text(std::ostream& os, const ComparisonReport& report);
ordered_json compare_to_json(const ComparisonReport& report);

// Per-marker per-occasion record counts, means, and standard deviations.
void write_data_summary(std::ostream& os, const StackedDataset& data);
ordered_json data_summary_to_json(const StackedDataset& data);

struct RecoveryParamSummary {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double mc_se = 0.0;  // sd of replicate estimates / sqrt(replicates)
  double z = 0.0;      // bias / mc_se
  bool pass = false;   // |bias| within 3 Monte-Carlo standard errors
  std::vector<double> estimates;
};

struct RecoveryReport {
  int replicates = 0;
  int converged = 0;
  int n_subjects = 0;
  std::uint64_t seed = 0;
  bool all_pass = false;
  std::vector<RecoveryParamSummary> params;
};

void write_recovery_text(std::ostream& os, const RecoveryReport& report);
ordered_json recovery_to_json(const RecoveryReport& report);

}  // namespace bivlmm::cli
