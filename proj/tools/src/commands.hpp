#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace bivlmm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitNotConverged = 3;
inline constexpr int kExitInternalError = 4;

// Command-line overrides applied on top of the config file.
struct GlobalOptions {
  std::optional<std::uint64_t> seed;  // replaces the config seed (simulate, recover)
  std::optional<Method> method;       // replaces every model's estimation method
  std::string out_prefix;             // replaces the config output prefix
  int verbosity = 0;
};

// Fit every model in the config, write per-model reports plus a comparison
// report under the output prefix. Returns kExitOk when every model converged,
// kExitNotConverged otherwise; input problems are thrown.
int cmd_fit(const std::string& config_path, const GlobalOptions& opts);

// Rebuild a comparison report from fit summary JSON files.
int cmd_compare(const std::vector<std::string>& summary_paths, const GlobalOptions& opts);

// Draw one synthetic dataset from a truth config and write it as a wide CSV
// with a generating-parameter sidecar.
int cmd_simulate(const std::string& config_path, const GlobalOptions& opts);

// Simulate-fit replicates against the truth config's generating parameters and
// report per-parameter bias against the Monte-Carlo standard error.
int cmd_recover(const std::string& config_path, const GlobalOptions& opts);

}  // namespace bivlmm::cli
