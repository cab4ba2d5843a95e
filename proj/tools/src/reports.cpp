#include "reports.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace bivlmm::cli {

std::string fmt6(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace {

std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::size_t name_width(const std::vector<std::string>& names, std::size_t minimum) {
  std::size_t w = minimum;
  for (const auto& n : names) w = std::max(w, n.size());
  return w;
}

ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

// Correlation of the random effects when every variance is positive; empty
// matrix otherwise (boundary fits have no defined correlation).
Eigen::MatrixXd g_correlation(const FitResult& fit) {
  if (fit.G.size() == 0) return {};
  for (Eigen::Index i = 0; i < fit.G.rows(); ++i) {
    if (!(fit.G(i, i) > 0.0)) return {};
  }
  return cov_to_corr(fit.G);
}

}  // namespace

ordered_json model_spec_to_json(const ModelSpec& spec) {
  ordered_json design;
  design["tau"] = spec.design.tau;
  design["intercept"] = spec.design.include_intercept;
  for (int k = 0; k < 2; ++k) {
    ordered_json terms = ordered_json::array();
    for (TimeTerm t : spec.design.terms[k]) terms.push_back(term_name(t));
    design[k == 0 ? "terms_m1" : "terms_m2"] = std::move(terms);
  }
  ordered_json j;
  j["scope"] = to_string(spec.scope);
  j["random_effects"] = to_string(spec.random_effects);
  j["residual"] = to_string(spec.residual);
  j["independent_markers"] = spec.independent_markers;
  j["method"] = to_string(spec.method);
  j["design"] = std::move(design);
  return j;
}

ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_fit_text(std::ostream& os, const FitResult& fit, const std::string& label) {
  if (!label.empty()) os << "label: " << label << "\n";
  os << "model: scope=" << to_string(fit.spec.scope)
     << " random_effects=" << to_string(fit.spec.random_effects)
     << " residual=" << to_string(fit.spec.residual)
     << " independent_markers=" << (fit.spec.independent_markers ? "yes" : "no")
     << " method=" << to_string(fit.spec.method) << "\n";
  os << "status: " << (fit.converged ? "converged" : "NOT CONVERGED") << " (" << fit.iterations
     << " iterations, " << fit.evaluations << " evaluations, gradient norm "
     << fmt6(fit.gradient_norm) << ")\n";
  if (!fit.parts.empty()) {
    os << "note: fitted as two independent univariate models\n";
  }
  os << "subjects: " << fit.n_subjects << "   observations: " << fit.n_observations << "\n";
  os << "log-likelihood: " << fmt6(fit.loglik) << "   deviance: " << fmt6(fit.deviance) << "\n";
  os << "parameters: " << fit.parameter_count << " (" << fit.n_fixed << " fixed + "
     << fit.n_cov_params << " covariance)   AIC: " << fmt6(fit.aic) << "\n";

  const std::size_t bw = name_width(fit.beta_names, 12);
  os << "\nfixed effects:\n";
  os << "  " << pad_right("name", bw) << pad_left("estimate", 14) << pad_left("se", 12)
     << pad_left("z", 10) << pad_left("p", 12) << "\n";
  for (Eigen::Index i = 0; i < fit.beta.size(); ++i) {
    const double se = fit.beta_cov(i, i) > 0.0 ? std::sqrt(fit.beta_cov(i, i))
                                               : std::numeric_limits<double>::quiet_NaN();
    std::string z = "NA", p = "NA";
    if (se > 0.0) {
      const WaldResult w = wald_test(fit.beta[i], se);
      z = fmt6(w.z);
      p = fmt6(w.p_value);
    }
    os << "  " << pad_right(fit.beta_names[i], bw) << pad_left(fmt6(fit.beta[i]), 14)
       << pad_left(fmt6(se), 12) << pad_left(z, 10) << pad_left(p, 12) << "\n";
  }

  std::vector<std::string> cov_names;
  for (const auto& cp : fit.cov_params) cov_names.push_back(cp.name);
  const std::size_t cw = name_width(cov_names, 12);
  os << "\ncovariance parameters (95% Wald intervals on the transformed scale):\n";
  os << "  " << pad_right("name", cw) << pad_left("estimate", 14) << pad_left("se", 12)
     << pad_left("lower", 14) << pad_left("upper", 14) << "\n";
  for (const auto& cp : fit.cov_params) {
    os << "  " << pad_right(cp.name, cw) << pad_left(fmt6(cp.value), 14)
       << pad_left(fmt6(cp.se), 12) << pad_left(fmt6(cp.ci_lo), 14)
       << pad_left(fmt6(cp.ci_hi), 14) << (cp.at_boundary ? "  [boundary]" : "") << "\n";
  }

  const Eigen::MatrixXd corr = g_correlation(fit);
  if (corr.size() > 0) {
    os << "\nrandom-effects correlation:\n";
    for (Eigen::Index r = 0; r < corr.rows(); ++r) {
      os << " ";
      for (Eigen::Index c = 0; c < corr.cols(); ++c) os << pad_left(fmt6(corr(r, c)), 13);
      os << "\n";
    }
  }

  if (!fit.warnings.empty()) {
    os << "\nwarnings:\n";
    for (const auto& w : fit.warnings) os << "  - " << w << "\n";
  }
}

ordered_json fit_to_json(const FitResult& fit, const std::string& label) {
  ordered_json j;
  j["kind"] = "fit_summary";
  j["label"] = label;
  j["model"] = model_spec_to_json(fit.spec);
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["evaluations"] = fit.evaluations;
  j["gradient_norm"] = number_or_null(fit.gradient_norm);
  j["message"] = fit.message;
  j["n_subjects"] = fit.n_subjects;
  j["n_observations"] = fit.n_observations;
  j["loglik"] = fit.loglik;
  j["deviance"] = fit.deviance;
  j["aic"] = fit.aic;
  j["n_fixed"] = fit.n_fixed;
  j["n_cov_params"] = fit.n_cov_params;
  j["parameter_count"] = fit.parameter_count;

  ordered_json fixed = ordered_json::array();
  for (Eigen::Index i = 0; i < fit.beta.size(); ++i) {
    ordered_json row;
    row["name"] = fit.beta_names[i];
    row["estimate"] = fit.beta[i];
    const double var = fit.beta_cov(i, i);
    if (var > 0.0) {
      const double se = std::sqrt(var);
      const WaldResult w = wald_test(fit.beta[i], se);
      row["se"] = se;
      row["z"] = w.z;
      row["p"] = w.p_value;
    } else {
      row["se"] = nullptr;
      row["z"] = nullptr;
      row["p"] = nullptr;
    }
    fixed.push_back(std::move(row));
  }
  j["fixed_effects"] = std::move(fixed);

  j["interval_method"] = "wald_transformed_95";
  ordered_json covp = ordered_json::array();
  for (const auto& cp : fit.cov_params) {
    ordered_json row;
    row["name"] = cp.name;
    row["estimate"] = cp.value;
    row["se"] = number_or_null(cp.se);
    row["ci_lower"] = number_or_null(cp.ci_lo);
    row["ci_upper"] = number_or_null(cp.ci_hi);
    row["at_boundary"] = cp.at_boundary;
    covp.push_back(std::move(row));
  }
  j["covariance_parameters"] = std::move(covp);

  if (fit.G.size() > 0) j["G"] = matrix_to_json(fit.G);
  const Eigen::MatrixXd corr = g_correlation(fit);
  if (corr.size() > 0) j["G_correlation"] = matrix_to_json(corr);
  if (fit.serial.C.size() > 0) {
    ordered_json s;
    s["C"] = matrix_to_json(fit.serial.C);
    s["rho"] = number_or_null(fit.serial.rho);
    j["serial"] = std::move(s);
  }
  j["error_var"] = fit.error_var;
  j["warnings"] = fit.warnings;
  if (!fit.parts.empty()) {
    ordered_json parts = ordered_json::array();
    parts.push_back(fit_to_json(fit.parts[0], label.empty() ? "" : label + " (M1)"));
    parts.push_back(fit_to_json(fit.parts[1], label.empty() ? "" : label + " (M2)"));
    j["parts"] = std::move(parts);
  }
  return j;
}

ModelSummaryRow summary_from_json(const ordered_json& j, const std::string& fallback_label) {
  auto missing = [&](const char* key) {
    return ConfigError("summary file is missing '" + std::string(key) + "'");
  };
  ModelSummaryRow row;
  if (!j.is_object()) throw ConfigError("summary file is not a JSON object");
  row.label = j.value("label", std::string());
  if (row.label.empty()) row.label = fallback_label;
  if (!j.contains("model") || !j.at("model").contains("method")) throw missing("model.method");
  const auto& model = j.at("model");
  row.method = parse_method(model.at("method").get<std::string>());
  if (!j.contains("loglik")) throw missing("loglik");
  row.loglik = j.at("loglik").get<double>();
  if (!j.contains("parameter_count")) throw missing("parameter_count");
  row.parameter_count = j.at("parameter_count").get<int>();

  if (model.contains("random_effects") && model.contains("residual") &&
      model.contains("independent_markers") && j.contains("fixed_effects")) {
    row.random_effects = parse_random_effects(model.at("random_effects").get<std::string>());
    row.residual = parse_residual(model.at("residual").get<std::string>());
    row.independent_markers = model.at("independent_markers").get<bool>();
    for (const auto& f : j.at("fixed_effects")) {
      row.fixed_names.push_back(f.at("name").get<std::string>());
    }
    row.structure_known = true;
  }
  return row;
}

void write_compare_text(std::ostream& os, const ComparisonReport& report) {
  std::vector<std::string> labels;
  for (const auto& m : report.models) labels.push_back(m.label);
  const std::size_t lw = name_width(labels, 12);

  os << "model comparison (" << report.models.size() << " models)\n";
  os << "    " << pad_right("model", lw) << pad_left("method", 8) << pad_left("params", 8)
     << pad_left("loglik", 14) << pad_left("AIC", 14) << "\n";
  for (std::size_t i = 0; i < report.models.size(); ++i) {
    const auto& m = report.models[i];
    os << (static_cast<int>(i) == report.best_aic_index ? "  * " : "    ") << pad_right(m.label, lw)
       << pad_left(to_string(m.method), 8) << pad_left(std::to_string(m.parameter_count), 8)
       << pad_left(fmt6(m.loglik), 14) << pad_left(fmt6(m.aic), 14) << "\n";
  }
  if (report.best_aic_index >= 0) os << "  (* lowest AIC)\n";

  if (!report.tests.empty()) {
    os << "\nlikelihood-ratio tests:\n";
    for (const auto& t : report.tests) {
      os << "  " << t.null_label << " -> " << t.alt_label << ": chi2 = " << fmt6(t.lrt.statistic)
         << ", df = " << t.lrt.df << ", p = " << fmt6(t.lrt.p_value) << "\n";
    }
  }
  if (!report.notes.empty()) {
    os << "\nnotes:\n";
    for (const auto& n : report.notes) os << "  - " << n << "\n";
  }
}

ordered_json compare_to_json(const ComparisonReport& report) {
  ordered_json j;
  j["kind"] = "model_comparison";
  ordered_json models = ordered_json::array();
  for (const auto& m : report.models) {
    ordered_json row;
    row["label"] = m.label;
    row["method"] = to_string(m.method);
    row["loglik"] = m.loglik;
    row["parameter_count"] = m.parameter_count;
    row["aic"] = m.aic;
    models.push_back(std::move(row));
  }
  j["models"] = std::move(models);
  j["best_aic_index"] = report.best_aic_index;
  ordered_json tests = ordered_json::array();
  for (const auto& t : report.tests) {
    ordered_json row;
    row["null"] = t.null_label;
    row["alt"] = t.alt_label;
    row["statistic"] = t.lrt.statistic;
    row["df"] = t.lrt.df;
    row["p_value"] = t.lrt.p_value;
    tests.push_back(std::move(row));
  }
  j["tests"] = std::move(tests);
  j["notes"] = report.notes;
  return j;
}

namespace {

struct OccasionCell {
  long n = 0;
  double sum = 0.0;
  double sum2 = 0.0;
};

// occasion -> per-marker accumulators, in ascending occasion order.
std::map<int, std::array<OccasionCell, 2>> occasion_table(const StackedDataset& data) {
  std::map<int, std::array<OccasionCell, 2>> table;
  for (const auto& subj : data.subjects) {
    for (const auto& rec : subj.records) {
      auto& cell = table[rec.occasion][static_cast<int>(rec.marker)];
      ++cell.n;
      cell.sum += rec.response;
      cell.sum2 += rec.response * rec.response;
    }
  }
  return table;
}

double cell_mean(const OccasionCell& c) {
  return c.n > 0 ? c.sum / static_cast<double>(c.n) : std::numeric_limits<double>::quiet_NaN();
}

double cell_sd(const OccasionCell& c) {
  if (c.n < 2) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(std::max((c.sum2 - c.sum * c.sum / static_cast<double>(c.n)) /
                                static_cast<double>(c.n - 1),
                            0.0));
}

}  // namespace

void write_data_summary(std::ostream& os, const StackedDataset& data) {
  os << "data: " << data.subjects.size() << " subjects, " << data.n_records()
     << " records, occasion spacing " << fmt6(data.occasion_spacing) << "\n";
  os << "\nper-occasion summary:\n";
  os << "  " << pad_right("occasion", 10);
  for (int k = 0; k < 2; ++k) {
    const std::string m = to_string(static_cast<Marker>(k));
    os << pad_left(m + " n", 8) << pad_left(m + " mean", 12) << pad_left(m + " sd", 12);
  }
  os << "\n";
  for (const auto& [occ, cells] : occasion_table(data)) {
    os << "  " << pad_right(std::to_string(occ), 10);
    for (int k = 0; k < 2; ++k) {
      os << pad_left(std::to_string(cells[k].n), 8) << pad_left(fmt6(cell_mean(cells[k])), 12)
         << pad_left(fmt6(cell_sd(cells[k])), 12);
    }
    os << "\n";
  }
}

ordered_json data_summary_to_json(const StackedDataset& data) {
  ordered_json j;
  j["kind"] = "data_summary";
  j["n_subjects"] = data.subjects.size();
  j["n_records"] = data.n_records();
  j["occasion_spacing"] = data.occasion_spacing;
  ordered_json rows = ordered_json::array();
  for (const auto& [occ, cells] : occasion_table(data)) {
    ordered_json row;
    row["occasion"] = occ;
    for (int k = 0; k < 2; ++k) {
      const std::string m = to_string(static_cast<Marker>(k));
      row[m + "_n"] = cells[k].n;
      row[m + "_mean"] = number_or_null(cell_mean(cells[k]));
      row[m + "_sd"] = number_or_null(cell_sd(cells[k]));
    }
    rows.push_back(std::move(row));
  }
  j["occasions"] = std::move(rows);
  return j;
}

void write_recovery_text(std::ostream& os, const RecoveryReport& report) {
  os << "parameter recovery: " << report.replicates << " replicates x " << report.n_subjects
     << " subjects (seed " << report.seed << ")\n";
  os << "converged: " << report.converged << "/" << report.replicates << "\n";
  std::vector<std::string> names;
  for (const auto& p : report.params) names.push_back(p.name);
  const std::size_t w = name_width(names, 12);
  os << "  " << pad_right("parameter", w) << pad_left("truth", 12) << pad_left("mean", 12)
     << pad_left("bias", 12) << pad_left("mc se", 12) << pad_left("z", 10)
     << pad_left("within 3 se", 13) << "\n";
  for (const auto& p : report.params) {
    os << "  " << pad_right(p.name, w) << pad_left(fmt6(p.truth), 12) << pad_left(fmt6(p.mean), 12)
       << pad_left(fmt6(p.bias), 12) << pad_left(fmt6(p.mc_se), 12) << pad_left(fmt6(p.z), 10)
       << pad_left(p.pass ? "yes" : "NO", 13) << "\n";
  }
  os << (report.all_pass ? "all parameters recovered within 3 Monte-Carlo standard errors\n"
                         : "RECOVERY FAILURE: at least one parameter is off by more than 3 "
                           "Monte-Carlo standard errors\n");
}

ordered_json recovery_to_json(const RecoveryReport& report) {
  ordered_json j;
  j["kind"] = "recovery_report";
  j["replicates"] = report.replicates;
  j["converged"] = report.converged;
  j["n_subjects"] = report.n_subjects;
  j["seed"] = report.seed;
  j["all_pass"] = report.all_pass;
  ordered_json params = ordered_json::array();
  for (const auto& p : report.params) {
    ordered_json row;
    row["name"] = p.name;
    row["truth"] = p.truth;
    row["mean"] = p.mean;
    row["bias"] = p.bias;
    row["mc_se"] = p.mc_se;
    row["z"] = number_or_null(p.z);
    row["pass"] = p.pass;
    row["estimates"] = p.estimates;
    params.push_back(std::move(row));
  }
  j["parameters"] = std::move(params);
  return j;
}

}  // namespace bivlmm::cli
