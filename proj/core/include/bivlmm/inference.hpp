#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "bivlmm/estimation.hpp"
#include "bivlmm/types.hpp"

namespace bivlmm {

// -2 * loglik + 2 * n_params. n_params counts fixed effects plus covariance
// parameters, matching FitResult::parameter_count.
double aic(double loglik, int n_params);

struct LrtResult {
  double statistic = 0.0;  // 2 * (loglik_alt - loglik_null), clamped at zero
  int df = 0;
  double p_value = 1.0;
};

// Requires df >= 1 and loglik_alt >= loglik_null - 1e-6; a larger deficit
// means the null cannot be nested in the alternative and throws
// NestingViolationError.
LrtResult likelihood_ratio_test(double loglik_null, double loglik_alt, int df);

struct WaldResult {
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

// z = estimate / se with a two-sided normal p-value; se <= 0 is an
// invalid-argument error.
WaldResult wald_test(double estimate, double se);

// Correlation matrix from a covariance matrix. The diagonal must be strictly
// positive; a non-positive entry throws std::invalid_argument (boundary fits
// with a zero variance have no defined correlation).
Eigen::MatrixXd cov_to_corr(const Eigen::MatrixXd& S);

// --- Translating serial-structure output from mixed-model software -------------
//
// Software reporting the Kronecker serial structure with a measurement-error
// ratio prints the process covariance entries UN(1,1), UN(2,1), UN(2,2), a
// common residual scale r, a log variance ratio delta ('EXP VAR'), and an
// 'AR(1)' covariance equal to rho * r. The natural parameters are recovered as
//   sigma2_e1 = r * exp(delta),  sigma2_e2 = r * exp(-delta),  rho = ar1 / r,
// so sigma2_e1 * sigma2_e2 = r^2 holds exactly; C passes through unchanged.

struct SasOutputBundle {
  double un_w1 = 0.0;     // UN(1,1): serial variance of marker 1
  double un_w12 = 0.0;    // UN(2,1): serial covariance
  double un_w2 = 0.0;     // UN(2,2): serial variance of marker 2
  double exp_var_delta = 0.0;  // 'EXP VAR' local-effect parameter delta
  double residual_r = 0.0;     // 'Residual' scale r, must be positive
  double ar1_cov = 0.0;        // 'AR(1)' covariance, rho * r
};

struct SasTranslation {
  double sigma2_e1 = 0.0;
  double sigma2_e2 = 0.0;
  double rho = 0.0;
  Eigen::Matrix2d C = Eigen::Matrix2d::Zero();  // process covariance
};

// Throws InvalidBundleError when r <= 0, a field is not finite, or the implied
// |rho| is not below 1.
SasTranslation sas_translate(const SasOutputBundle& bundle);

// Inverse direction: the bundle the reference software would print for the
// given natural parameters. Composing sas_translate with this is the identity.
SasOutputBundle sas_bundle_from(double sigma2_e1, double sigma2_e2, double rho,
                                const Eigen::Matrix2d& C);

// --- Model comparison ------------------------------------------------------------

struct ModelSummaryRow {
  std::string label;
  Method method = Method::ML;
  double loglik = 0.0;
  int parameter_count = 0;
  double aic = 0.0;  // recomputed by compare_models

  // Structural description used to decide nesting; summary files written by
  // the CLI carry it, hand-built rows may leave structure_known false to get
  // AIC ranking only.
  bool structure_known = false;
  std::vector<std::string> fixed_names;
  RandomEffects random_effects = RandomEffects::None;
  bool independent_markers = false;
  ResidualKind residual = ResidualKind::GroupedDiagonal;
};

// Empty result means the null row is structurally nested in the alternative
// row and an LRT is meaningful; otherwise the reason the test is refused.
std::string lrt_refusal(const ModelSummaryRow& null_row, const ModelSummaryRow& alt_row);

struct LrtEntry {
  std::string null_label;
  std::string alt_label;
  LrtResult lrt;
};

struct ComparisonReport {
  std::vector<ModelSummaryRow> models;
  int best_aic_index = -1;
  std::vector<LrtEntry> tests;
  std::vector<std::string> notes;
};

// AIC ranking plus likelihood-ratio tests for every structurally nested pair;
// pairs that look comparable but fail the nesting rules get an explanatory
// note instead of a test.
ComparisonReport compare_models(const std::vector<ModelSummaryRow>& rows);

ModelSummaryRow summary_row(const FitResult& fit, const std::string& label);

}  // namespace bivlmm
