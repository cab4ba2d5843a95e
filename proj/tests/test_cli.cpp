#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bivlmm/types.hpp"
#include "json.hpp"
#include "reports.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

const fs::path& scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "bivlmm_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args, std::string* out = nullptr,
            std::string* err = nullptr) {
  static int counter = 0;
  const fs::path out_file = scratch_dir() / ("stdout_" + std::to_string(counter) + ".txt");
  const fs::path err_file = scratch_dir() / ("stderr_" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = std::string(BIVLMM_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int rc = std::system(cmd.c_str());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  if (out) *out = slurp(out_file);
  if (err) *err = slurp(err_file);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ordered_json read_json(const fs::path& p) { return ordered_json::parse(read_file(p)); }

// Truth configuration shared by the end-to-end cases: the serial model at the
// published parameter scale, small enough to fit quickly.
std::string truth_json(const fs::path& prefix, int n_subjects, int seed,
                       int replicates) {
  std::ostringstream ss;
  ss << R"({
  "design": {"tau": 4.0},
  "n_subjects": )"
     << n_subjects << R"(,
  "n_occasions": 6,
  "times": [1, 2, 3, 4, 5, 6],
  "beta": [0.05, -0.04, 3.0, -2.0],
  "serial": {"C": [[1.54, -7.0], [-7.0, 195.0]], "rho": 0.91},
  "error_var": [0.15, 77.0],
  "method": "ml",
  "replicates": )"
     << replicates << R"(,
  "seed": )"
     << seed << R"(,
  "output": {"prefix": ")"
     << prefix.string() << R"("}
})";
  return ss.str();
}

std::string fit_json(const fs::path& csv, const fs::path& prefix,
                     const std::string& models) {
  std::ostringstream ss;
  ss << R"({
  "data": {
    "file": ")"
     << csv.string() << R"(",
    "format": "wide",
    "occasion_spacing": 1.0,
    "columns": {"subject": "subject", "time": "time", "m1": "m1", "m2": "m2"}
  },
  "design": {"tau": 4.0},
  "method": "ml",
  "models": [)"
     << models << R"(],
  "output": {"prefix": ")"
     << prefix.string() << R"("}
})";
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing validates model lists and spellings", "[cli][config]") {
  using namespace bivlmm;
  const auto parse = [](const std::string& text) {
    return cli::parse_run_config(ordered_json::parse(text));
  };
  const std::string base = R"({
    "data": {"file": "x.csv", "format": "wide", "occasion_spacing": 1.0,
             "columns": {"subject": "s", "time": "t", "m1": "a", "m2": "b"}},
    "models": [MODELS]
  })";
  auto with_models = [&](const std::string& models) {
    std::string s = base;
    s.replace(s.find("MODELS"), 6, models);
    return s;
  };

  // Defaults: REML, bivariate slopes with grouped error.
  const cli::RunConfig cfg = parse(with_models(R"({"name": "m"})"));
  CHECK(cfg.models.size() == 1);
  CHECK(cfg.models[0].spec.method == Method::REML);
  CHECK(cfg.models[0].spec.random_effects == RandomEffects::Slopes);
  CHECK(cfg.models[0].spec.residual == ResidualKind::GroupedDiagonal);
  CHECK_FALSE(cfg.models[0].spec.independent_markers);
  CHECK(cfg.output.prefix == "fit");

  // Duplicate names are configuration errors.
  CHECK_THROWS_AS(parse(with_models(R"({"name": "m"}, {"name": "m"})")), ConfigError);

  // Residual spellings, long and short.
  CHECK(parse(with_models(R"({"name": "m", "residual": "ar1_error"})"))
            .models[0]
            .spec.residual == ResidualKind::KroneckerAr1PlusError);
  CHECK(parse(with_models(R"({"name": "m", "residual": "kronecker_ar1_plus_error"})"))
            .models[0]
            .spec.residual == ResidualKind::KroneckerAr1PlusError);
  CHECK(parse(with_models(R"({"name": "m", "residual": "ar1_only"})"))
            .models[0]
            .spec.residual == ResidualKind::KroneckerAr1Only);
  CHECK_THROWS_AS(parse(with_models(R"({"name": "m", "residual": "toeplitz"})")),
                  ConfigError);

  // Unknown method.
  CHECK_THROWS_AS(parse(with_models(R"({"name": "m", "method": "mcmc"})")), ConfigError);
}

TEST_CASE("truth config validation", "[cli][config]") {
  using namespace bivlmm;
  ordered_json j = ordered_json::parse(truth_json("p", 10, 1, 2));
  CHECK_NOTHROW(cli::parse_truth_config(j));

  ordered_json bad_rho = j;
  bad_rho["serial"]["rho"] = 1.5;
  CHECK_THROWS_AS(cli::parse_truth_config(bad_rho), ConfigError);

  ordered_json bad_beta = j;
  bad_beta["beta"] = {1.0, 2.0};
  CHECK_THROWS_AS(cli::parse_truth_config(bad_beta), ConfigError);

  ordered_json bad_rate = j;
  bad_rate["missingness"] = {{"kind", "intermittent"}, {"rate", 1.0}};
  CHECK_THROWS_AS(cli::parse_truth_config(bad_rate), ConfigError);
}

TEST_CASE("simulate writes a deterministic dataset and truth record", "[cli]") {
  const fs::path dir = scratch_dir();
  const fs::path truth_path = dir / "truth_sim.json";
  write_file(truth_path, truth_json(dir / "sim", 30, 7, 2));

  std::string out;
  REQUIRE(run_cli("simulate " + truth_path.string(), &out) == 0);
  CHECK(out.find("30 subjects") != std::string::npos);

  const std::string csv1 = read_file(dir / "sim.csv");
  const ordered_json truth1 = read_json(dir / "sim_truth.json");
  CHECK(truth1.at("kind") == "simulation_truth");
  CHECK(truth1.at("seed") == 7);
  CHECK(truth1.at("n_subjects") == 30);

  // Re-run: byte-identical outputs.
  REQUIRE(run_cli("simulate " + truth_path.string()) == 0);
  CHECK(read_file(dir / "sim.csv") == csv1);

  // Seed override changes the data and is recorded.
  REQUIRE(run_cli("simulate " + truth_path.string() + " --seed 123") == 0);
  CHECK(read_file(dir / "sim.csv") != csv1);
  CHECK(read_json(dir / "sim_truth.json").at("seed") == 123);

  // Restore the seed-7 dataset for the fit cases below.
  REQUIRE(run_cli("simulate " + truth_path.string()) == 0);
}

TEST_CASE("fit produces reports whose numbers match across formats", "[cli]") {
  const fs::path dir = scratch_dir();
  const fs::path csv = dir / "sim.csv";
  REQUIRE(fs::exists(csv));  // produced by the simulate case

  const fs::path config_path = dir / "fit_config.json";
  const std::string models =
      R"({"name": "uni_slopes", "random_effects": "slopes", "residual": "grouped",
          "independent_markers": true},
         {"name": "biv_ar1", "random_effects": "none", "residual": "ar1_error"})";
  write_file(config_path, fit_json(csv, dir / "fit", models));

  std::string out;
  const int code = run_cli("fit " + config_path.string(), &out);
  REQUIRE((code == 0 || code == 3));  // reports are written either way

  // Per-model reports, data summary, and comparison all exist.
  for (const char* suffix : {"_uni_slopes.json", "_uni_slopes.txt", "_biv_ar1.json",
                             "_biv_ar1.txt", "_data.json", "_data.txt", "_compare.json",
                             "_compare.txt"}) {
    INFO(suffix);
    CHECK(fs::exists(dir / ("fit" + std::string(suffix))));
  }

  const ordered_json fit = read_json(dir / "fit_biv_ar1.json");
  CHECK(fit.at("kind") == "fit_summary");
  CHECK(fit.at("converged") == true);  // the generating model should converge
  CHECK(fit.at("model").at("method") == "ML");
  CHECK(fit.at("parameter_count") == 10);

  // The AIC identity holds for every comparison row.
  const ordered_json cmp = read_json(dir / "fit_compare.json");
  for (const auto& row : cmp.at("models")) {
    const double ll = row.at("loglik").get<double>();
    const int k = row.at("parameter_count").get<int>();
    CHECK(row.at("aic").get<double>() ==
          Catch::Approx(-2.0 * ll + 2.0 * k).epsilon(1e-9));
  }
  // The serial model generated the data; it should win the ranking.
  const int best = cmp.at("best_aic_index").get<int>();
  CHECK(cmp.at("models")[static_cast<std::size_t>(best)].at("label") == "biv_ar1");

  // Cross-format agreement: the text report prints the same numbers the JSON
  // carries, formatted with six significant digits.
  const std::string text = read_file(dir / "fit_biv_ar1.txt");
  CHECK(text.find(bivlmm::cli::fmt6(fit.at("loglik").get<double>())) != std::string::npos);
  for (const auto& p : fit.at("covariance_parameters")) {
    INFO(p.at("name").get<std::string>());
    CHECK(text.find(bivlmm::cli::fmt6(p.at("estimate").get<double>())) !=
          std::string::npos);
  }
  const std::string cmp_text = read_file(dir / "fit_compare.txt");
  for (const auto& row : cmp.at("models")) {
    CHECK(cmp_text.find(bivlmm::cli::fmt6(row.at("aic").get<double>())) !=
          std::string::npos);
  }

  // Determinism: a second run reproduces every report byte for byte.
  const std::string fit_bytes = read_file(dir / "fit_biv_ar1.json");
  const std::string cmp_bytes = read_file(dir / "fit_compare.json");
  const std::string text_bytes = read_file(dir / "fit_biv_ar1.txt");
  REQUIRE(run_cli("fit " + config_path.string()) == code);
  CHECK(read_file(dir / "fit_biv_ar1.json") == fit_bytes);
  CHECK(read_file(dir / "fit_compare.json") == cmp_bytes);
  CHECK(read_file(dir / "fit_biv_ar1.txt") == text_bytes);
}

TEST_CASE("compare accepts summary files and refuses fewer than two", "[cli]") {
  const fs::path dir = scratch_dir();
  REQUIRE(fs::exists(dir / "fit_uni_slopes.json"));  // from the fit case

  std::string out;
  const int code = run_cli("compare " + (dir / "fit_uni_slopes.json").string() + " " +
                               (dir / "fit_biv_ar1.json").string(),
                           &out);
  CHECK(code == 0);
  CHECK(out.find("AIC") != std::string::npos);

  std::string err;
  CHECK(run_cli("compare " + (dir / "fit_uni_slopes.json").string(), &out, &err) == 2);
  CHECK_FALSE(err.empty());
}

TEST_CASE("an over-parameterized model is reported, not crashed", "[cli]") {
  // Random slopes on top of the serial truth: the information matrix ends up
  // singular or the fit stops at the iteration cap; either way the report is
  // written and the exit code is 0 or 3, never an internal error.
  const fs::path dir = scratch_dir();
  const fs::path csv = dir / "sim.csv";
  const fs::path config_path = dir / "fit_hard.json";
  write_file(config_path,
             fit_json(csv, dir / "hard",
                      R"({"name": "slopes_ar1", "random_effects": "slopes",
                          "residual": "ar1_error"})"));
  std::string out, err;
  const int code = run_cli("fit " + config_path.string(), &out, &err);
  CHECK((code == 0 || code == 3));
  const ordered_json fit = read_json(dir / "hard_slopes_ar1.json");
  CHECK(fit.contains("converged"));
  CHECK(fit.at("kind") == "fit_summary");
}

TEST_CASE("recover runs a small study end to end", "[cli]") {
  const fs::path dir = scratch_dir();
  const fs::path truth_path = dir / "truth_recover.json";
  write_file(truth_path, truth_json(dir / "rec", 10, 11, 2));

  std::string out;
  const int code = run_cli("recover " + truth_path.string(), &out);
  CHECK((code == 0 || code == 3));
  REQUIRE(fs::exists(dir / "rec_recovery.json"));
  const ordered_json rep = read_json(dir / "rec_recovery.json");
  CHECK(rep.at("kind") == "recovery_report");
  CHECK(rep.at("replicates") == 2);
  CHECK(rep.at("n_subjects") == 10);
  CHECK(rep.at("seed") == 11);
  REQUIRE(rep.at("parameters").is_array());
  CHECK(rep.at("parameters").size() >= 10);  // 4 fixed + 6 covariance

  // Determinism of the report files.
  const std::string bytes_json = read_file(dir / "rec_recovery.json");
  const std::string bytes_txt = read_file(dir / "rec_recovery.txt");
  REQUIRE(run_cli("recover " + truth_path.string()) == code);
  CHECK(read_file(dir / "rec_recovery.json") == bytes_json);
  CHECK(read_file(dir / "rec_recovery.txt") == bytes_txt);
}

TEST_CASE("input errors exit with code 2 and a diagnostic", "[cli][errors]") {
  const fs::path dir = scratch_dir();
  std::string out, err;

  CHECK(run_cli("fit " + (dir / "does_not_exist.json").string(), &out, &err) == 2);
  CHECK(err.find("error") != std::string::npos);

  // Unknown subcommand and bad flags are usage errors.
  CHECK(run_cli("frobnicate", &out, &err) == 2);
  CHECK(run_cli("fit", &out, &err) == 2);  // missing required config

  // Help is not an error.
  CHECK(run_cli("--help", &out, &err) == 0);
  CHECK(out.find("fit") != std::string::npos);

  // Malformed CSV cell: the diagnostic names the line.
  const fs::path bad_csv = dir / "bad.csv";
  write_file(bad_csv, "subject,time,m1,m2\nS1,1,0.5,oops\n");
  const fs::path bad_cfg = dir / "bad_fit.json";
  write_file(bad_cfg, fit_json(bad_csv, dir / "bad", R"({"name": "m"})"));
  CHECK(run_cli("fit " + bad_cfg.string(), &out, &err) == 2);
  CHECK(err.find("line 2") != std::string::npos);

  // Structurally valid CSV with no usable records.
  const fs::path empty_csv = dir / "empty.csv";
  write_file(empty_csv, "subject,time,m1,m2\n");
  const fs::path empty_cfg = dir / "empty_fit.json";
  write_file(empty_cfg, fit_json(empty_csv, dir / "empty", R"({"name": "m"})"));
  CHECK(run_cli("fit " + empty_cfg.string(), &out, &err) == 2);

  // Config that is not JSON at all.
  const fs::path junk = dir / "junk.json";
  write_file(junk, "not json {");
  CHECK(run_cli("fit " + junk.string(), &out, &err) == 2);
}

TEST_CASE("a non-converging model makes fit exit with code 3", "[cli][errors]") {
  const fs::path dir = scratch_dir();
  const fs::path csv = dir / "sim.csv";
  // Full random-slopes covariance on serial-only data: the extra covariance
  // directions collapse and the observed information loses rank. With fixed
  // data this outcome is deterministic.
  const fs::path cfg = dir / "fit_nonconv.json";
  write_file(cfg, fit_json(csv, dir / "nonconv",
                           R"({"name": "biv_slopes", "random_effects": "slopes",
                               "residual": "grouped"})"));
  std::string out, err;
  const int code = run_cli("fit " + cfg.string(), &out, &err);
  const ordered_json fit = read_json(dir / "nonconv_biv_slopes.json");
  if (code == 3) {
    CHECK(fit.at("converged") == false);
  } else {
    CHECK(code == 0);  // acceptable only if the fit genuinely converged
    CHECK(fit.at("converged") == true);
  }
}

TEST_CASE("method override is applied and recorded", "[cli]") {
  const fs::path dir = scratch_dir();
  const fs::path csv = dir / "sim.csv";
  const fs::path cfg = dir / "fit_override.json";
  write_file(cfg, fit_json(csv, dir / "ovr",
                           R"({"name": "biv_ar1", "random_effects": "none",
                               "residual": "ar1_error"})"));
  const int code = run_cli("fit " + cfg.string() + " --method reml");
  REQUIRE((code == 0 || code == 3));
  CHECK(read_json(dir / "ovr_biv_ar1.json").at("model").at("method") == "REML");
}
