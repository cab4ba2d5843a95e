#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bivlmm/data.hpp"
#include "bivlmm/estimation.hpp"
#include "bivlmm/simulate.hpp"

namespace bivlmm::cli {

using ordered_json = nlohmann::ordered_json;

struct DataConfig {
  std::string file;
  bool wide = true;
  double occasion_spacing = 1.0;
  WideSchema wide_schema;
  LongSchema long_schema;
  bool baseline_difference = false;
};

struct OutputConfig {
  std::string prefix;
};

// One named model in a `fit` config; the design and dataset are shared.
struct ModelEntry {
  std::string name;
  ModelSpec spec;
};

// Configuration for `fit`.
struct RunConfig {
  DataConfig data;
  DesignSpec design;
  std::vector<ModelEntry> models;  // fitted in listed order
  OutputConfig output;
};

// Configuration for `simulate` and `recover`.
struct TruthConfig {
  TruthParams truth;
  SimulateOptions sim;
  std::optional<MissingnessSpec> missingness;
  Method method = Method::REML;
  int replicates = 20;
  std::uint64_t seed = 1;
  OutputConfig output;
  WideSchema csv_schema;
};

// The model whose structure matches the generating parameters.
ModelSpec model_for_truth(const TruthConfig& config);

RunConfig parse_run_config(const ordered_json& j);
TruthConfig parse_truth_config(const ordered_json& j);

// Reads and parses a JSON file; throws ConfigError with the path on any failure.
ordered_json load_json_file(const std::string& path);

Method parse_method(const std::string& s);
Scope parse_scope(const std::string& s);
RandomEffects parse_random_effects(const std::string& s);
ResidualKind parse_residual(const std::string& s);
TimeTerm parse_time_term(const std::string& s);
MissingnessKind parse_missingness_kind(const std::string& s);
const char* term_name(TimeTerm t);  // config-facing spelling ("piece_pre", ...)

// Loads the dataset named by the config (CSV read, stacking, optional
// baseline differencing). Warnings about excluded subjects are appended.
StackedDataset load_dataset(const DataConfig& config, std::vector<std::string>* warnings);

}  // namespace bivlmm::cli
