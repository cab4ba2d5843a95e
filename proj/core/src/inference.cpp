#include "bivlmm/inference.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "bivlmm/stats.hpp"

namespace bivlmm {

double aic(double loglik, int n_params) {
  if (n_params < 0) throw std::invalid_argument("aic: negative parameter count");
  return -2.0 * loglik + 2.0 * n_params;
}

LrtResult likelihood_ratio_test(double loglik_null, double loglik_alt, int df) {
  if (df < 1) throw std::invalid_argument("likelihood_ratio_test: df must be at least 1");
  const double diff = loglik_alt - loglik_null;
  if (diff < -1e-6) {
    std::ostringstream os;
    os << "likelihood of the alternative model is lower by " << -diff
       << "; the models cannot be nested";
    throw NestingViolationError(os.str());
  }
  LrtResult res;
  res.statistic = std::max(2.0 * diff, 0.0);
  res.df = df;
  res.p_value = chisq_tail(res.statistic, res.df);
  return res;
}

WaldResult wald_test(double estimate, double se) {
  if (!(se > 0.0)) throw std::invalid_argument("wald_test: standard error must be positive");
  WaldResult res;
  res.estimate = estimate;
  res.se = se;
  res.z = estimate / se;
  res.p_value = norm_two_sided_p(res.z);
  return res;
}

Eigen::MatrixXd cov_to_corr(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols()) throw std::invalid_argument("cov_to_corr: matrix must be square");
  const Eigen::Index n = S.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(S(i, i) > 0.0)) {
      throw std::invalid_argument("cov_to_corr: diagonal must be strictly positive");
    }
  }
  Eigen::MatrixXd corr(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      corr(i, j) = i == j ? 1.0 : S(i, j) / std::sqrt(S(i, i) * S(j, j));
    }
  }
  return corr;
}

SasTranslation sas_translate(const SasOutputBundle& bundle) {
  if (!(bundle.residual_r > 0.0)) {
    throw InvalidBundleError("residual scale must be positive");
  }
  for (double v : {bundle.un_w1, bundle.un_w12, bundle.un_w2, bundle.exp_var_delta,
                   bundle.ar1_cov}) {
    if (!std::isfinite(v)) throw InvalidBundleError("bundle values must be finite");
  }
  SasTranslation t;
  t.sigma2_e1 = bundle.residual_r * std::exp(bundle.exp_var_delta);
  t.sigma2_e2 = bundle.residual_r * std::exp(-bundle.exp_var_delta);
  t.rho = bundle.ar1_cov / bundle.residual_r;
  if (!(std::fabs(t.rho) < 1.0)) {
    throw InvalidBundleError("implied autocorrelation is not inside (-1, 1)");
  }
  t.C << bundle.un_w1, bundle.un_w12, bundle.un_w12, bundle.un_w2;
  return t;
}

SasOutputBundle sas_bundle_from(double sigma2_e1, double sigma2_e2, double rho,
                                const Eigen::Matrix2d& C) {
  if (!(sigma2_e1 > 0.0) || !(sigma2_e2 > 0.0)) {
    throw InvalidBundleError("error variances must be positive");
  }
  if (!(std::fabs(rho) < 1.0)) {
    throw InvalidBundleError("autocorrelation must be inside (-1, 1)");
  }
  SasOutputBundle b;
  b.un_w1 = C(0, 0);
  b.un_w12 = C(1, 0);
  b.un_w2 = C(1, 1);
  b.residual_r = std::sqrt(sigma2_e1 * sigma2_e2);
  b.exp_var_delta = 0.5 * std::log(sigma2_e1 / sigma2_e2);
  b.ar1_cov = rho * b.residual_r;
  return b;
}

namespace {

// None < masked slopes < full slopes.
int random_effects_rank(const ModelSummaryRow& row) {
  if (row.random_effects == RandomEffects::None) return 0;
  return row.independent_markers ? 1 : 2;
}

// Grouped error < AR(1) process only < AR(1) process + error: each structure
// is a parameter restriction of the next (rho = 0 with a diagonal C gives the
// grouped error; zero error variances give the process-only form).
int residual_rank(const ModelSummaryRow& row) {
  switch (row.residual) {
    case ResidualKind::GroupedDiagonal: return 0;
    case ResidualKind::KroneckerAr1Only: return 1;
    default: return 2;
  }
}

bool pair_serial(const ModelSummaryRow& row) {
  return row.independent_markers && residual_has_serial(row.residual);
}

}  // namespace

std::string lrt_refusal(const ModelSummaryRow& null_row, const ModelSummaryRow& alt_row) {
  if (!null_row.structure_known || !alt_row.structure_known) {
    return "model structure is not recorded in the summaries";
  }
  if (null_row.method != alt_row.method) {
    return "the models were fitted by different methods";
  }
  if (null_row.fixed_names != alt_row.fixed_names) {
    if (null_row.method == Method::REML) {
      return "REML log-likelihoods are not comparable between models with different fixed effects";
    }
    return "the models have different fixed effects";
  }
  if (pair_serial(null_row) || pair_serial(alt_row)) {
    return "independent-marker serial models estimate a separate autocorrelation per marker and "
           "are not nested in the shared-correlation models";
  }
  if (random_effects_rank(null_row) > random_effects_rank(alt_row) ||
      residual_rank(null_row) > residual_rank(alt_row)) {
    return "the covariance structures are not nested";
  }
  if (alt_row.parameter_count <= null_row.parameter_count) {
    return "the alternative model adds no parameters";
  }
  return std::string();
}

ComparisonReport compare_models(const std::vector<ModelSummaryRow>& rows) {
  ComparisonReport report;
  report.models = rows;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < report.models.size(); ++i) {
    auto& m = report.models[i];
    m.aic = aic(m.loglik, m.parameter_count);
    if (m.aic < best) {
      best = m.aic;
      report.best_aic_index = static_cast<int>(i);
    }
  }

  bool method_mix = false;
  for (std::size_t i = 0; i < report.models.size(); ++i) {
    for (std::size_t j = 0; j < report.models.size(); ++j) {
      if (i == j) continue;
      const auto& null_row = report.models[i];
      const auto& alt_row = report.models[j];
      if (alt_row.parameter_count <= null_row.parameter_count) continue;
      if (null_row.method != alt_row.method) {
        method_mix = true;
        continue;
      }
      const std::string refusal = lrt_refusal(null_row, alt_row);
      if (!refusal.empty()) {
        report.notes.push_back("no LRT for '" + null_row.label + "' vs '" + alt_row.label +
                               "': " + refusal);
        continue;
      }
      LrtEntry entry;
      entry.null_label = null_row.label;
      entry.alt_label = alt_row.label;
      try {
        entry.lrt = likelihood_ratio_test(null_row.loglik, alt_row.loglik,
                                          alt_row.parameter_count - null_row.parameter_count);
      } catch (const NestingViolationError& e) {
        report.notes.push_back("no LRT for '" + null_row.label + "' vs '" + alt_row.label +
                               "': " + e.what());
        continue;
      }
      report.tests.push_back(std::move(entry));
    }
  }

  if (method_mix) {
    report.notes.push_back(
        "models fitted by different methods are ranked by AIC but not tested against each other");
  }
  return report;
}

ModelSummaryRow summary_row(const FitResult& fit, const std::string& label) {
  ModelSummaryRow row;
  row.label = label;
  row.method = fit.spec.method;
  row.loglik = fit.loglik;
  row.parameter_count = fit.parameter_count;
  row.aic = fit.aic;
  row.structure_known = true;
  row.fixed_names = fit.beta_names;
  row.random_effects = fit.spec.random_effects;
  row.independent_markers = fit.spec.independent_markers;
  row.residual = fit.spec.residual;
  return row;
}

}  // namespace bivlmm
