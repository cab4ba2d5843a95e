#include <array>
#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

// Flag storage for one subcommand; the Option pointers tell us whether an
// override was actually given.
struct CommonFlags {
  std::uint64_t seed = 0;
  std::string method;
  std::string out_prefix;
  int verbosity = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* method_opt = nullptr;
};

void add_common_flags(CLI::App* sub, CommonFlags& f) {
  f.seed_opt = sub->add_option("--seed", f.seed, "override the config seed");
  f.method_opt = sub->add_option("--method", f.method, "estimation method override (ml or reml)");
  sub->add_option("-o,--output", f.out_prefix, "override the config output prefix");
  sub->add_flag("-v,--verbose", f.verbosity, "more progress detail");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace bivlmm;

  CLI::App app{"bivariate longitudinal linear mixed models"};
  app.set_version_flag("--version", "bivlmm 0.1.0");
  app.require_subcommand(1);

  std::string fit_config;
  std::vector<std::string> summary_paths;
  std::string sim_config;
  std::string rec_config;

  CLI::App* fit = app.add_subcommand("fit", "fit configured models to a CSV dataset");
  fit->add_option("config", fit_config, "run config (JSON)")->required();
  CLI::App* cmp = app.add_subcommand("compare", "compare fitted models from summary JSON files");
  cmp->add_option("summaries", summary_paths, "fit summary JSON files")->required();
  CLI::App* sim = app.add_subcommand("simulate", "draw a synthetic dataset from a truth config");
  sim->add_option("config", sim_config, "truth config (JSON)")->required();
  CLI::App* rec =
      app.add_subcommand("recover", "measure parameter recovery over simulate-fit replicates");
  rec->add_option("config", rec_config, "truth config (JSON)")->required();

  std::array<CLI::App*, 4> subs = {fit, cmp, sim, rec};
  std::array<CommonFlags, 4> flags;
  for (std::size_t i = 0; i < subs.size(); ++i) add_common_flags(subs[i], flags[i]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitInputError;
  }

  const CommonFlags* f = nullptr;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) f = &flags[i];
  }

  try {
    cli::GlobalOptions opts;
    if (f->seed_opt->count() > 0) opts.seed = f->seed;
    if (f->method_opt->count() > 0) opts.method = cli::parse_method(f->method);
    opts.out_prefix = f->out_prefix;
    opts.verbosity = f->verbosity;

    if (fit->parsed()) return cli::cmd_fit(fit_config, opts);
    if (cmp->parsed()) return cli::cmd_compare(summary_paths, opts);
    if (sim->parsed()) return cli::cmd_simulate(sim_config, opts);
    return cli::cmd_recover(rec_config, opts);
  } catch (const EvaluationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitNotConverged;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitInputError;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitInputError;
  } catch (const RankDeficiencyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitInputError;
  } catch (const InvalidBundleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitInputError;
  } catch (const NestingViolationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return cli::kExitInternalError;
  }
}
