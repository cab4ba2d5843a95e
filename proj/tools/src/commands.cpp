#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>

#include "bivlmm/rng.hpp"
#include "bivlmm/simulate.hpp"
#include "reports.hpp"

namespace bivlmm::cli {

namespace {

void write_text_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  body(os);
  if (!os) throw ConfigError("failed while writing '" + path + "'");
}

void write_json_file(const std::string& path, const ordered_json& j) {
  write_text_file(path, [&](std::ostream& os) { os << j.dump(2) << "\n"; });
}

// Model names appear in output file names; keep them path-safe.
std::string sanitize_name(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '.' || c == '_';
    if (!ok) c = '_';
  }
  return out;
}

std::string file_stem(const std::string& path) {
  const std::size_t slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  const std::size_t dot = base.find_last_of('.');
  if (dot != std::string::npos && dot > 0) base.resize(dot);
  return base;
}

// The generating parameters must match the shapes the matching model expects;
// shape problems are user input errors, not internal ones.
void validate_truth(const TruthConfig& config, const ModelSpec& spec) {
  const int p = fixed_effect_count(spec);
  if (config.truth.beta.size() != p) {
    throw ConfigError("truth config: beta has " + std::to_string(config.truth.beta.size()) +
                      " entries but the design has " + std::to_string(p) + " columns");
  }
  const auto& G = config.truth.G;
  if (G.size() > 0 && (G.rows() != G.cols() || G.rows() != p)) {
    throw ConfigError("truth config: G must be " + std::to_string(p) + "x" + std::to_string(p));
  }
  const auto& C = config.truth.serial.C;
  if (C.size() > 0) {
    if (C.rows() != 2 || C.cols() != 2) throw ConfigError("truth config: serial C must be 2x2");
    const double rho = config.truth.serial.rho;
    if (!(std::abs(rho) < 1.0)) {
      throw ConfigError("truth config: serial rho must lie strictly inside (-1, 1)");
    }
  }
  if (!config.truth.error_var.empty() && config.truth.error_var.size() != 2) {
    throw ConfigError("truth config: error_var needs one entry per marker");
  }
  for (double v : config.truth.error_var) {
    if (v < 0.0) throw ConfigError("truth config: error variances must be non-negative");
  }
  if (config.sim.n_subjects < 1) throw ConfigError("truth config: n_subjects must be positive");
  if (config.sim.n_occasions < 1) throw ConfigError("truth config: n_occasions must be positive");
  if (config.replicates < 1) throw ConfigError("truth config: replicates must be positive");
}

ordered_json truth_to_json(const TruthConfig& config, const ModelSpec& spec) {
  ordered_json j;
  j["kind"] = "simulation_truth";
  j["seed"] = config.seed;
  j["n_subjects"] = config.sim.n_subjects;
  j["n_occasions"] = config.sim.n_occasions;
  j["occasion_spacing"] = config.sim.occasion_spacing;
  if (!config.sim.times.empty()) j["times"] = config.sim.times;
  j["beta"] = std::vector<double>(config.truth.beta.begin(), config.truth.beta.end());
  if (config.truth.G.size() > 0) j["G"] = matrix_to_json(config.truth.G);
  if (config.truth.serial.C.size() > 0) {
    ordered_json s;
    s["C"] = matrix_to_json(config.truth.serial.C);
    s["rho"] = config.truth.serial.rho;
    j["serial"] = std::move(s);
  }
  j["error_var"] = config.truth.error_var;
  if (config.missingness) {
    ordered_json m;
    m["kind"] = to_string(config.missingness->kind);
    m["rate"] = config.missingness->rate;
    j["missingness"] = std::move(m);
  }
  j["model"] = model_spec_to_json(spec);
  return j;
}

StackedDataset simulate_replicate(const TruthConfig& config, int replicate) {
  const std::uint64_t sim_seed =
      CounterRng::derive_key(config.seed, 2 * static_cast<std::uint64_t>(replicate));
  StackedDataset data = simulate(config.truth, config.sim, sim_seed);
  if (config.missingness) {
    const std::uint64_t miss_seed =
        CounterRng::derive_key(config.seed, 2 * static_cast<std::uint64_t>(replicate) + 1);
    data = apply_mar_missingness(data, *config.missingness, miss_seed);
  }
  return data;
}

}  // namespace

int cmd_fit(const std::string& config_path, const GlobalOptions& opts) {
  RunConfig config = parse_run_config(load_json_file(config_path));
  if (!opts.out_prefix.empty()) config.output.prefix = opts.out_prefix;
  if (opts.method) {
    for (auto& entry : config.models) entry.spec.method = *opts.method;
  }

  std::vector<std::string> warnings;
  const StackedDataset data = load_dataset(config.data, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  if (data.subjects.empty()) {
    throw DataError("dataset '" + config.data.file + "' has no usable records");
  }

  const std::string& prefix = config.output.prefix;
  write_text_file(prefix + "_data.txt", [&](std::ostream& os) { write_data_summary(os, data); });
  write_json_file(prefix + "_data.json", data_summary_to_json(data));

  bool all_converged = true;
  std::vector<ModelSummaryRow> rows;
  for (const auto& entry : config.models) {
    if (opts.verbosity > 0) std::cout << "fitting '" << entry.name << "'\n" << std::flush;
    const FitResult fit = fit_model(data, entry.spec);
    all_converged = all_converged && fit.converged;
    rows.push_back(summary_row(fit, entry.name));

    const std::string base = prefix + "_" + sanitize_name(entry.name);
    write_text_file(base + ".txt", [&](std::ostream& os) { write_fit_text(os, fit, entry.name); });
    write_json_file(base + ".json", fit_to_json(fit, entry.name));
    if (opts.verbosity > 0) {
      write_fit_text(std::cout, fit, entry.name);
      std::cout << "\n";
    } else {
      std::cout << entry.name << ": " << (fit.converged ? "converged" : "NOT CONVERGED")
                << ", loglik " << fmt6(fit.loglik) << ", AIC " << fmt6(fit.aic) << " ("
                << fit.parameter_count << " parameters)\n";
    }
  }

  const ComparisonReport report = compare_models(rows);
  write_text_file(prefix + "_compare.txt",
                  [&](std::ostream& os) { write_compare_text(os, report); });
  write_json_file(prefix + "_compare.json", compare_to_json(report));
  std::cout << "\n";
  write_compare_text(std::cout, report);
  std::cout << "\nreports written under prefix '" << prefix << "'\n";
  return all_converged ? kExitOk : kExitNotConverged;
}

int cmd_compare(const std::vector<std::string>& summary_paths, const GlobalOptions& opts) {
  if (summary_paths.size() < 2) {
    throw ConfigError("compare needs at least two fit summary files");
  }
  std::vector<ModelSummaryRow> rows;
  for (const auto& path : summary_paths) {
    rows.push_back(summary_from_json(load_json_file(path), file_stem(path)));
  }
  const ComparisonReport report = compare_models(rows);
  write_compare_text(std::cout, report);
  if (!opts.out_prefix.empty()) {
    write_text_file(opts.out_prefix + "_compare.txt",
                    [&](std::ostream& os) { write_compare_text(os, report); });
    write_json_file(opts.out_prefix + "_compare.json", compare_to_json(report));
  }
  return kExitOk;
}

int cmd_simulate(const std::string& config_path, const GlobalOptions& opts) {
  TruthConfig config = parse_truth_config(load_json_file(config_path));
  if (opts.seed) config.seed = *opts.seed;
  if (!opts.out_prefix.empty()) config.output.prefix = opts.out_prefix;
  const ModelSpec spec = model_for_truth(config);
  validate_truth(config, spec);

  // Same streams as recover's first replicate, so `simulate` shows exactly the
  // data that replicate 0 of a recovery run fits.
  const StackedDataset data = simulate_replicate(config, 0);

  const std::string csv_path = config.output.prefix + ".csv";
  write_text_file(csv_path,
                  [&](std::ostream& os) { write_wide_csv(os, data, config.csv_schema); });
  write_json_file(config.output.prefix + "_truth.json", truth_to_json(config, spec));
  std::cout << "wrote " << data.subjects.size() << " subjects (" << data.n_records()
            << " records) to " << csv_path << "\n";
  return kExitOk;
}

int cmd_recover(const std::string& config_path, const GlobalOptions& opts) {
  TruthConfig config = parse_truth_config(load_json_file(config_path));
  if (opts.seed) config.seed = *opts.seed;
  if (opts.method) config.method = *opts.method;
  if (!opts.out_prefix.empty()) config.output.prefix = opts.out_prefix;
  const ModelSpec spec = model_for_truth(config);
  validate_truth(config, spec);

  // Truth on the natural scale, labeled exactly like the fit output.
  const CovModel model(spec);
  CovarianceAtTheta truth_nat;
  truth_nat.G = config.truth.G;
  truth_nat.serial = config.truth.serial;
  if (residual_has_error(spec.residual)) truth_nat.error_var = config.truth.error_var;
  const Eigen::VectorXd natural_truth = model.natural(model.pack(truth_nat));
  const std::vector<std::string> cov_names = model.param_names();
  const std::vector<std::string> beta_names = fixed_effect_names(spec.design, spec.scope);

  std::vector<std::string> names = beta_names;
  names.insert(names.end(), cov_names.begin(), cov_names.end());
  Eigen::VectorXd truths(names.size());
  truths.head(config.truth.beta.size()) = config.truth.beta;
  truths.tail(natural_truth.size()) = natural_truth;

  const auto t_start = std::chrono::steady_clock::now();
  std::vector<std::vector<double>> draws(names.size());
  int converged = 0;
  for (int r = 0; r < config.replicates; ++r) {
    const StackedDataset data = simulate_replicate(config, r);
    FitResult fit;
    try {
      fit = fit_model(data, spec);
    } catch (const EvaluationError& e) {
      std::cerr << "replicate " << r << ": " << e.what() << "\n";
      continue;
    }
    if (opts.verbosity > 0) {
      std::cerr << "replicate " << r << ": " << (fit.converged ? "converged" : "NOT CONVERGED")
                << ", loglik " << fmt6(fit.loglik) << "\n";
    }
    if (!fit.converged) continue;
    ++converged;
    if (fit.beta.size() != static_cast<Eigen::Index>(beta_names.size()) ||
        fit.cov_params.size() != cov_names.size()) {
      throw DimensionError("recovery fit returned an unexpected parameter layout");
    }
    for (Eigen::Index i = 0; i < fit.beta.size(); ++i) draws[i].push_back(fit.beta[i]);
    for (std::size_t k = 0; k < fit.cov_params.size(); ++k) {
      draws[beta_names.size() + k].push_back(fit.cov_params[k].value);
    }
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  RecoveryReport report;
  report.replicates = config.replicates;
  report.converged = converged;
  report.n_subjects = config.sim.n_subjects;
  report.seed = config.seed;
  report.all_pass = converged == config.replicates;
  for (std::size_t i = 0; i < names.size(); ++i) {
    RecoveryParamSummary p;
    p.name = names[i];
    p.truth = truths[static_cast<Eigen::Index>(i)];
    p.estimates = draws[i];
    const auto n = static_cast<double>(p.estimates.size());
    if (n > 0) {
      double sum = 0.0;
      for (double v : p.estimates) sum += v;
      p.mean = sum / n;
      double ss = 0.0;
      for (double v : p.estimates) ss += (v - p.mean) * (v - p.mean);
      const double sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      p.mc_se = sd / std::sqrt(n);
      p.bias = p.mean - p.truth;
      p.z = p.mc_se > 0.0 ? p.bias / p.mc_se : std::numeric_limits<double>::quiet_NaN();
      p.pass = p.mc_se > 0.0 ? std::abs(p.bias) <= 3.0 * p.mc_se : p.bias == 0.0;
    } else {
      p.mean = p.bias = p.mc_se = std::numeric_limits<double>::quiet_NaN();
      p.z = std::numeric_limits<double>::quiet_NaN();
      p.pass = false;
    }
    report.all_pass = report.all_pass && p.pass;
    report.params.push_back(std::move(p));
  }

  write_text_file(config.output.prefix + "_recovery.txt",
                  [&](std::ostream& os) { write_recovery_text(os, report); });
  write_json_file(config.output.prefix + "_recovery.json", recovery_to_json(report));
  write_recovery_text(std::cout, report);
  std::cerr << "elapsed: " << fmt6(elapsed) << "s\n";
  return converged == config.replicates ? kExitOk : kExitNotConverged;
}

}  // namespace bivlmm::cli
