#include "run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace bivlmm::cli {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

const ordered_json& require(const ordered_json& j, const std::string& key,
                            const std::string& where) {
  if (!j.is_object()) fail(where + " must be a JSON object");
  const auto it = j.find(key);
  if (it == j.end()) fail("missing key '" + key + "' in " + where);
  return *it;
}

template <typename T>
T get_as(const ordered_json& j, const std::string& key, const std::string& where) {
  try {
    return require(j, key, where).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail("bad value for '" + key + "' in " + where + ": " + e.what());
  }
}

template <typename T>
T get_or(const ordered_json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get_as<T>(j, key, where);
}

Eigen::MatrixXd parse_matrix(const ordered_json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where + " must be a non-empty array of rows");
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) fail(where + " rows must be non-empty arrays");
  Eigen::MatrixXd m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) fail(where + " rows must all have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) fail(where + " entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

std::vector<TimeTerm> parse_terms(const ordered_json& j, const std::string& where) {
  if (!j.is_array()) fail(where + " must be an array of term names");
  std::vector<TimeTerm> terms;
  for (const auto& t : j) {
    if (!t.is_string()) fail(where + " entries must be strings");
    terms.push_back(parse_time_term(t.get<std::string>()));
  }
  return terms;
}

DesignSpec parse_design(const ordered_json& j) {
  DesignSpec design;
  if (j.is_null()) return design;
  design.tau = get_or<double>(j, "tau", design.tau, "design");
  design.include_intercept = get_or<bool>(j, "intercept", design.include_intercept, "design");
  if (j.contains("terms")) {
    const auto terms = parse_terms(j.at("terms"), "design.terms");
    design.terms[0] = terms;
    design.terms[1] = terms;
  }
  if (j.contains("terms_m1")) design.terms[0] = parse_terms(j.at("terms_m1"), "design.terms_m1");
  if (j.contains("terms_m2")) design.terms[1] = parse_terms(j.at("terms_m2"), "design.terms_m2");
  try {
    design.validate();
  } catch (const std::exception& e) {
    fail(std::string("invalid design: ") + e.what());
  }
  return design;
}

ModelEntry parse_model_entry(const ordered_json& j, const DesignSpec& design,
                             Method default_method, std::size_t index) {
  std::ostringstream label;
  label << "models[" << index << "]";
  const std::string where = label.str();
  if (!j.is_object()) fail(where + " must be an object");

  ModelEntry entry;
  entry.name = get_as<std::string>(j, "name", where);
  if (entry.name.empty()) fail(where + ".name must not be empty");
  entry.spec.design = design;
  entry.spec.scope = parse_scope(get_or<std::string>(j, "scope", "bivariate", where));
  entry.spec.random_effects =
      parse_random_effects(get_or<std::string>(j, "random_effects", "slopes", where));
  entry.spec.residual = parse_residual(get_or<std::string>(j, "residual", "grouped", where));
  entry.spec.independent_markers = get_or<bool>(j, "independent_markers", false, where);
  entry.spec.method = j.contains("method")
                          ? parse_method(get_as<std::string>(j, "method", where))
                          : default_method;
  return entry;
}

OutputConfig parse_output(const ordered_json& j, const std::string& default_prefix) {
  OutputConfig out;
  out.prefix = default_prefix;
  if (j.is_null()) return out;
  out.prefix = get_or<std::string>(j, "prefix", out.prefix, "output");
  if (out.prefix.empty()) fail("output.prefix must not be empty");
  return out;
}

}  // namespace

Method parse_method(const std::string& s) {
  if (s == "ML" || s == "ml") return Method::ML;
  if (s == "REML" || s == "reml") return Method::REML;
  fail("unknown method '" + s + "' (expected ML or REML)");
}

Scope parse_scope(const std::string& s) {
  if (s == "bivariate") return Scope::Bivariate;
  if (s == "m1_only" || s == "m1") return Scope::M1Only;
  if (s == "m2_only" || s == "m2") return Scope::M2Only;
  fail("unknown scope '" + s + "' (expected bivariate, m1_only, or m2_only)");
}

RandomEffects parse_random_effects(const std::string& s) {
  if (s == "none") return RandomEffects::None;
  if (s == "slopes") return RandomEffects::Slopes;
  fail("unknown random_effects '" + s + "' (expected none or slopes)");
}

ResidualKind parse_residual(const std::string& s) {
  if (s == "grouped" || s == "grouped_diagonal") return ResidualKind::GroupedDiagonal;
  if (s == "ar1_error" || s == "kronecker_ar1_plus_error") {
    return ResidualKind::KroneckerAr1PlusError;
  }
  if (s == "ar1_only" || s == "kronecker_ar1_only") return ResidualKind::KroneckerAr1Only;
  fail("unknown residual '" + s + "' (expected grouped, ar1_error, or ar1_only)");
}

TimeTerm parse_time_term(const std::string& s) {
  if (s == "time") return TimeTerm::Time;
  if (s == "piece_pre") return TimeTerm::PiecePre;
  if (s == "piece_post") return TimeTerm::PiecePost;
  fail("unknown design term '" + s + "' (expected time, piece_pre, or piece_post)");
}

MissingnessKind parse_missingness_kind(const std::string& s) {
  if (s == "dropout") return MissingnessKind::Dropout;
  if (s == "intermittent") return MissingnessKind::Intermittent;
  fail("unknown missingness kind '" + s + "' (expected dropout or intermittent)");
}

const char* term_name(TimeTerm t) {
  switch (t) {
    case TimeTerm::Time: return "time";
    case TimeTerm::PiecePre: return "piece_pre";
    default: return "piece_post";
  }
}

ordered_json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file '" + path + "'");
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail("cannot parse '" + path + "': " + e.what());
  }
}

RunConfig parse_run_config(const ordered_json& j) {
  RunConfig config;
  const auto& data = require(j, "data", "config");
  config.data.file = get_as<std::string>(data, "file", "data");
  const std::string format = get_or<std::string>(data, "format", "wide", "data");
  if (format == "wide") config.data.wide = true;
  else if (format == "long") config.data.wide = false;
  else fail("unknown data format '" + format + "' (expected wide or long)");
  config.data.occasion_spacing = get_as<double>(data, "occasion_spacing", "data");
  if (!(config.data.occasion_spacing > 0.0)) fail("data.occasion_spacing must be positive");
  config.data.baseline_difference = get_or<bool>(data, "baseline_difference", false, "data");

  const auto& cols = require(data, "columns", "data");
  if (config.data.wide) {
    config.data.wide_schema.subject_col = get_as<std::string>(cols, "subject", "data.columns");
    config.data.wide_schema.time_col = get_as<std::string>(cols, "time", "data.columns");
    config.data.wide_schema.marker_cols[0] = get_as<std::string>(cols, "m1", "data.columns");
    config.data.wide_schema.marker_cols[1] = get_as<std::string>(cols, "m2", "data.columns");
  } else {
    config.data.long_schema.subject_col = get_as<std::string>(cols, "subject", "data.columns");
    config.data.long_schema.marker_col = get_as<std::string>(cols, "marker", "data.columns");
    config.data.long_schema.time_col = get_as<std::string>(cols, "time", "data.columns");
    config.data.long_schema.response_col = get_as<std::string>(cols, "response", "data.columns");
  }

  config.design = parse_design(j.contains("design") ? j.at("design") : ordered_json());
  const Method default_method =
      parse_method(get_or<std::string>(j, "method", "REML", "config"));

  const auto& models = require(j, "models", "config");
  if (!models.is_array() || models.empty()) fail("'models' must be a non-empty array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < models.size(); ++i) {
    ModelEntry entry = parse_model_entry(models[i], config.design, default_method, i);
    if (!seen.insert(entry.name).second) fail("duplicate model name '" + entry.name + "'");
    config.models.push_back(std::move(entry));
  }

  config.output = parse_output(j.contains("output") ? j.at("output") : ordered_json(), "fit");
  return config;
}

TruthConfig parse_truth_config(const ordered_json& j) {
  TruthConfig config;
  config.truth.design = parse_design(j.contains("design") ? j.at("design") : ordered_json());
  config.sim.n_subjects = get_as<int>(j, "n_subjects", "truth config");
  config.sim.n_occasions = get_as<int>(j, "n_occasions", "truth config");
  config.sim.occasion_spacing = get_or<double>(j, "occasion_spacing", 1.0, "truth config");
  if (j.contains("times")) {
    config.sim.times = get_as<std::vector<double>>(j, "times", "truth config");
  }

  const auto beta = get_as<std::vector<double>>(j, "beta", "truth config");
  const auto names = fixed_effect_names(config.truth.design, Scope::Bivariate);
  if (beta.size() != names.size()) {
    std::ostringstream os;
    os << "beta has " << beta.size() << " entries but the design has " << names.size()
       << " fixed-effect columns";
    fail(os.str());
  }
  config.truth.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), beta.size());

  if (j.contains("G") && !j.at("G").is_null()) {
    config.truth.G = parse_matrix(j.at("G"), "G");
    if (config.truth.G.rows() != config.truth.G.cols() ||
        config.truth.G.rows() != static_cast<Eigen::Index>(names.size())) {
      fail("G must be square with one row per fixed-effect column");
    }
  }

  if (j.contains("serial") && !j.at("serial").is_null()) {
    const auto& s = j.at("serial");
    if (s.contains("C")) {
      config.truth.serial.C = parse_matrix(s.at("C"), "serial.C");
      if (config.truth.serial.C.rows() != 2 || config.truth.serial.C.cols() != 2) {
        fail("serial.C must be 2x2");
      }
    } else {
      Eigen::MatrixXd C(2, 2);
      C(0, 0) = get_as<double>(s, "var_m1", "serial");
      C(1, 1) = get_as<double>(s, "var_m2", "serial");
      C(0, 1) = C(1, 0) = get_or<double>(s, "cov", 0.0, "serial");
      config.truth.serial.C = C;
    }
    config.truth.serial.rho = get_as<double>(s, "rho", "serial");
    if (!(std::fabs(config.truth.serial.rho) < 1.0)) fail("serial.rho must satisfy |rho| < 1");
  }

  const auto& err = require(j, "error_var", "truth config");
  if (err.is_array()) {
    const auto v = err.get<std::vector<double>>();
    if (v.size() != 2) fail("error_var must have two entries");
    config.truth.error_var = v;
  } else {
    config.truth.error_var = {get_as<double>(err, "m1", "error_var"),
                              get_as<double>(err, "m2", "error_var")};
  }

  if (j.contains("missingness") && !j.at("missingness").is_null()) {
    const auto& m = j.at("missingness");
    MissingnessSpec spec;
    spec.kind = parse_missingness_kind(get_as<std::string>(m, "kind", "missingness"));
    spec.rate = get_as<double>(m, "rate", "missingness");
    if (!(spec.rate >= 0.0 && spec.rate < 1.0)) fail("missingness.rate must be in [0, 1)");
    config.missingness = spec;
  }

  config.method = parse_method(get_or<std::string>(j, "method", "REML", "truth config"));
  config.replicates = get_or<int>(j, "replicates", 20, "truth config");
  if (config.replicates <= 0) fail("replicates must be positive");
  config.seed = get_or<std::uint64_t>(j, "seed", 1, "truth config");
  config.output = parse_output(j.contains("output") ? j.at("output") : ordered_json(), "sim");

  config.csv_schema.subject_col = "subject";
  config.csv_schema.time_col = "time";
  config.csv_schema.marker_cols = {"m1", "m2"};
  if (j.contains("columns")) {
    const auto& cols = j.at("columns");
    config.csv_schema.subject_col =
        get_or<std::string>(cols, "subject", config.csv_schema.subject_col, "columns");
    config.csv_schema.time_col =
        get_or<std::string>(cols, "time", config.csv_schema.time_col, "columns");
    config.csv_schema.marker_cols[0] =
        get_or<std::string>(cols, "m1", config.csv_schema.marker_cols[0], "columns");
    config.csv_schema.marker_cols[1] =
        get_or<std::string>(cols, "m2", config.csv_schema.marker_cols[1], "columns");
  }
  return config;
}

ModelSpec model_for_truth(const TruthConfig& config) {
  ModelSpec spec;
  spec.design = config.truth.design;
  spec.scope = Scope::Bivariate;
  spec.random_effects =
      config.truth.G.size() > 0 ? RandomEffects::Slopes : RandomEffects::None;
  const bool has_serial = config.truth.serial.C.size() > 0;
  const bool has_error = config.truth.error_var.size() == 2 &&
                         (config.truth.error_var[0] > 0.0 || config.truth.error_var[1] > 0.0);
  if (has_serial) {
    spec.residual =
        has_error ? ResidualKind::KroneckerAr1PlusError : ResidualKind::KroneckerAr1Only;
  } else {
    spec.residual = ResidualKind::GroupedDiagonal;
  }
  spec.independent_markers = false;
  spec.method = config.method;
  return spec;
}

StackedDataset load_dataset(const DataConfig& config, std::vector<std::string>* warnings) {
  std::ifstream in(config.file);
  if (!in) throw ConfigError("cannot open data file '" + config.file + "'");
  StackedDataset data;
  if (config.wide) {
    data = stack_wide(read_wide_csv(in, config.wide_schema), config.occasion_spacing);
  } else {
    data = stack_long(read_long_csv(in, config.long_schema), config.occasion_spacing);
  }
  if (config.baseline_difference) {
    BaselineDiffResult diffed = baseline_difference(data);
    if (warnings) {
      for (const auto& id : diffed.excluded_subjects) {
        warnings->push_back("subject " + id +
                            " excluded: observed series lacks a baseline measurement");
      }
    }
    data = std::move(diffed.data);
  }
  return data;
}

}  // namespace bivlmm::cli
