#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bivlmm/covariance.hpp"
#include "bivlmm/data.hpp"
#include "bivlmm/optimize.hpp"
#include "bivlmm/types.hpp"

namespace bivlmm {

enum class Method { ML, REML };
enum class RandomEffects { None, Slopes };

// Residual structure. GroupedDiagonal is heterogeneous measurement error only;
// the Kronecker variants add a cross-marker process with AR(1) occasion
// correlation, with or without measurement error on top. Free parameters for a
// bivariate model: 2, 6, 4 respectively.
enum class ResidualKind { GroupedDiagonal, KroneckerAr1PlusError, KroneckerAr1Only };

constexpr bool residual_has_serial(ResidualKind k) { return k != ResidualKind::GroupedDiagonal; }
constexpr bool residual_has_error(ResidualKind k) { return k != ResidualKind::KroneckerAr1Only; }

const char* to_string(Method m);
const char* to_string(RandomEffects r);
const char* to_string(ResidualKind k);

struct ModelSpec {
  DesignSpec design;
  Scope scope = Scope::Bivariate;
  RandomEffects random_effects = RandomEffects::Slopes;
  ResidualKind residual = ResidualKind::GroupedDiagonal;
  // Forces all cross-marker covariance to zero. With serial correlation this
  // also gives each marker its own autocorrelation, so the model is fitted as
  // two independent univariate models and the results combined.
  bool independent_markers = false;
  Method method = Method::REML;
};

int fixed_effect_count(const ModelSpec& spec);
int covariance_parameter_count(const ModelSpec& spec);
// Total count entering the AIC: fixed effects + free covariance parameters.
int parameter_count(const ModelSpec& spec);

// --- Unconstrained covariance parameterization --------------------------------
//
// theta layout: [G packed log-Cholesky | serial C packed log-Cholesky |
// atanh(rho) | log error variances], with absent components contributing no
// entries. Every theta in R^q maps to a valid covariance model and the natural
// <-> unconstrained maps are mutually inverse.

struct CovarianceAtTheta {
  Eigen::MatrixXd G;       // 0x0 when the model has no random effects
  KroneckerAr1 serial;     // C is 0x0 when the model has no serial process
  std::vector<double> error_var;  // one per active marker, scope order

  // Lower-triangular factors of G and C as mapped from theta, carried along by
  // expand(). Derivatives use them directly; a hand-assembled struct may leave
  // them empty, in which case the factors are recomputed by factorization.
  Eigen::MatrixXd g_factor;
  Eigen::MatrixXd c_factor;
};

class CovModel {
 public:
  explicit CovModel(const ModelSpec& spec);

  int n_params() const { return total_; }
  const ModelSpec& spec() const { return spec_; }
  const std::vector<Marker>& active_markers() const { return markers_; }

  CovarianceAtTheta expand(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd pack(const CovarianceAtTheta& nat) const;

  // Natural-scale view: distinct covariance entries, serial correlation, error
  // variances; names() labels them in the same order as natural().
  std::vector<std::string> param_names() const;
  Eigen::VectorXd natural(const Eigen::VectorXd& theta) const;

  enum class NaturalKind { Variance, Covariance, Correlation };
  struct NaturalParamInfo {
    NaturalKind kind = NaturalKind::Variance;
    int marker = -1;  // index into active_markers(); -1 for cross-marker terms
  };
  std::vector<NaturalParamInfo> natural_info() const;

  // Marginal covariance for one subject's rows.
  Eigen::MatrixXd marginal_cov(const CovarianceAtTheta& cov, const SubjectDesign& d) const;
  // Derivative of the marginal covariance w.r.t. theta[j], evaluated at cov.
  Eigen::MatrixXd marginal_cov_derivative(const CovarianceAtTheta& cov, const SubjectDesign& d,
                                          int j) const;

 private:
  ModelSpec spec_;
  std::vector<Marker> markers_;
  std::vector<int> g_blocks_;       // empty when no random effects
  std::vector<int> c_blocks_;       // empty when no serial process
  std::vector<LowerTriIndex> g_idx_;
  std::vector<LowerTriIndex> c_idx_;
  int g_offset_ = 0, g_count_ = 0;
  int c_offset_ = 0, c_count_ = 0;
  int rho_offset_ = -1;
  int err_offset_ = 0, err_count_ = 0;
  int total_ = 0;

  std::vector<int> process_of_rows(const SubjectDesign& d) const;
};

// --- Profiled likelihood -------------------------------------------------------

struct LikelihoodEval {
  double negloglik = 0.0;     // -(ML or REML log-likelihood), beta profiled out
  Eigen::VectorXd beta;       // GLS estimate at this theta
  Eigen::MatrixXd beta_cov;   // (sum_i X_i' V_i^-1 X_i)^-1
};

LikelihoodEval profiled_negloglik(const std::vector<SubjectDesign>& designs, const CovModel& model,
                                  const Eigen::VectorXd& theta, Method method);

// Analytic gradient of the profiled objective above w.r.t. theta.
Eigen::VectorXd objective_gradient(const std::vector<SubjectDesign>& designs,
                                   const CovModel& model, const Eigen::VectorXd& theta,
                                   Method method);

// --- Fitting ---------------------------------------------------------------------

struct ParameterEstimate {
  std::string name;
  double value = 0.0;               // natural scale
  double se = 0.0;                  // delta-method; NaN when unavailable
  // 95% Wald interval computed on the unconstrained scale (log for variances,
  // atanh for the serial correlation) and back-transformed; NaN when no
  // standard error is available.
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  bool at_boundary = false;         // variance estimated at (numerically) zero
};

struct FitResult {
  ModelSpec spec;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  double gradient_norm = std::numeric_limits<double>::quiet_NaN();
  std::string message;

  double loglik = 0.0;      // maximized ML or REML log-likelihood
  double deviance = 0.0;    // -2 * loglik
  double aic = 0.0;         // -2 * loglik + 2 * parameter_count
  int n_subjects = 0;
  int n_observations = 0;
  int n_fixed = 0;
  int n_cov_params = 0;
  int parameter_count = 0;  // n_fixed + n_cov_params

  std::vector<std::string> beta_names;
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_cov;

  std::vector<ParameterEstimate> cov_params;
  Eigen::VectorXd theta;    // unconstrained optimum (empty for combined pair fits)

  // Assembled natural-scale components. For a combined independent-marker fit
  // G and serial.C are block/diagonal assemblies of the parts and serial.rho
  // is NaN (the per-marker values live in cov_params and in parts).
  Eigen::MatrixXd G;
  KroneckerAr1 serial;
  std::vector<double> error_var;

  std::vector<std::string> warnings;
  std::vector<FitResult> parts;  // univariate halves of an independent-marker fit
};

struct FitOptions {
  OptimOptions optim;
  std::optional<Eigen::VectorXd> theta0;  // starting point override
  bool compute_se = true;
};

// Fits on pre-built per-subject designs. Refuses independent-marker bivariate
// models with a serial process (those need per-marker data; use fit_model).
FitResult fit_designs(const std::vector<SubjectDesign>& designs, const ModelSpec& spec,
                      const FitOptions& options = {});

// Builds designs from the dataset (honouring spec.scope) and fits. Routes
// independent-marker serial models through two univariate fits.
FitResult fit_model(const StackedDataset& data, const ModelSpec& spec,
                    const FitOptions& options = {});

// Default starting point: error variances take the OLS residual variance split
// evenly across the model's stochastic components, G and C start at
// 0.1 x (residual variance) on their diagonals, and rho starts at 0.1. The
// residual variance is computed per marker (the markers can differ in scale by
// orders of magnitude, and a common value would start one of them far off).
Eigen::VectorXd default_start(const std::vector<SubjectDesign>& designs, const CovModel& model);

}  // namespace bivlmm
