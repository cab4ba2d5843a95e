#include "bivlmm/simulate.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "bivlmm/rng.hpp"

namespace bivlmm {

const char* to_string(MissingnessKind k) {
  return k == MissingnessKind::Dropout ? "dropout" : "intermittent";
}

StackedDataset simulate(const TruthParams& truth, const SimulateOptions& options, uint64_t seed) {
  truth.design.validate();
  if (options.n_subjects <= 0) throw std::invalid_argument("n_subjects must be positive");
  if (options.n_occasions <= 0) throw std::invalid_argument("n_occasions must be positive");
  if (!(options.occasion_spacing > 0.0)) {
    throw std::invalid_argument("occasion_spacing must be positive");
  }
  if (!options.times.empty() &&
      static_cast<int>(options.times.size()) != options.n_occasions) {
    throw std::invalid_argument("times must have one entry per occasion");
  }
  if (truth.error_var.size() != 2) {
    throw std::invalid_argument("error_var must hold one variance per marker");
  }
  for (double v : truth.error_var) {
    if (!(v >= 0.0)) throw std::invalid_argument("error variances must be non-negative");
  }

  std::vector<double> times = options.times;
  if (times.empty()) {
    times.resize(options.n_occasions);
    for (int j = 0; j < options.n_occasions; ++j) times[j] = j * options.occasion_spacing;
  }

  // Complete grid, responses filled in below.
  std::vector<LongRecord> records;
  records.reserve(static_cast<std::size_t>(options.n_subjects) * options.n_occasions * 2);
  for (int i = 0; i < options.n_subjects; ++i) {
    const std::string id = "S" + std::to_string(i + 1);
    for (Marker m : {Marker::M1, Marker::M2}) {
      for (int j = 0; j < options.n_occasions; ++j) {
        records.push_back({id, m, times[j], 0, 0.0});
      }
    }
  }
  StackedDataset data = stack_long(records, options.occasion_spacing);

  const auto designs = build_design(data, truth.design, Scope::Bivariate);
  if (truth.beta.size() != designs.front().X.cols()) {
    throw DimensionError("beta does not match the design's fixed-effect columns");
  }

  const bool has_re = truth.G.size() > 0;
  const bool has_serial = truth.serial.C.size() > 0;
  Eigen::MatrixXd g_sqrt;
  if (has_re) {
    if (truth.G.rows() != designs.front().Z.cols()) {
      throw DimensionError("G does not match the design's random-effect columns");
    }
    g_sqrt = psd_sqrt(truth.G);
  }
  Eigen::MatrixXd w_sqrt;
  if (has_serial) {
    // The complete grid is identical across subjects, so one square root serves all.
    std::vector<int> process, occasion;
    for (const Marker m : designs.front().marker_of_row) {
      process.push_back(m == Marker::M1 ? 0 : 1);
    }
    occasion = designs.front().occasion_of_row;
    w_sqrt = psd_sqrt(serial_cov_rows(truth.serial, process, occasion));
  }

  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    auto& subj = data.subjects[i];
    const SubjectDesign& d = designs[i];
    const int n = d.rows();
    CounterRng rng(CounterRng::derive_key(seed, i));
    auto normal = [&] { return rng.next_normal(); };

    Eigen::VectorXd y = d.X * truth.beta;
    if (has_re) {
      Eigen::VectorXd raw(g_sqrt.cols());
      for (Eigen::Index k = 0; k < raw.size(); ++k) raw[k] = normal();
      y.noalias() += d.Z * (g_sqrt * raw);
    }
    if (has_serial) {
      Eigen::VectorXd raw(n);
      for (int k = 0; k < n; ++k) raw[k] = normal();
      y.noalias() += w_sqrt * raw;
    }
    for (int k = 0; k < n; ++k) {
      const double sd = std::sqrt(truth.error_var[static_cast<int>(d.marker_of_row[k])]);
      y[k] += sd * normal();
    }
    for (int k = 0; k < n; ++k) subj.records[k].response = y[k];
  }
  return data;
}

StackedDataset apply_mar_missingness(const StackedDataset& data, const MissingnessSpec& spec,
                                     uint64_t seed) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0)) {
    throw std::invalid_argument("missingness rate must be in [0, 1)");
  }
  StackedDataset out;
  out.occasion_spacing = data.occasion_spacing;
  out.grid_origin = data.grid_origin;

  const uint64_t miss_key = CounterRng::derive_key(seed, 0xB1A5u);
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const auto& subj = data.subjects[i];
    CounterRng rng(CounterRng::derive_key(miss_key, i));

    SubjectData kept{subj.id, {}};
    std::array<bool, 2> marker_dropped = {false, false};
    for (const auto& rec : subj.records) {
      if (spec.kind == MissingnessKind::Intermittent) {
        if (!rng.next_bernoulli(spec.rate)) kept.records.push_back(rec);
        continue;
      }
      // Dropout: records arrive marker-major with occasions ascending; one
      // draw per at-risk record, none after the series has ended.
      const int k = static_cast<int>(rec.marker);
      if (rec.occasion == 0) {
        kept.records.push_back(rec);
        continue;
      }
      if (marker_dropped[k]) continue;
      if (rng.next_bernoulli(spec.rate)) {
        marker_dropped[k] = true;
        continue;
      }
      kept.records.push_back(rec);
    }
    if (!kept.records.empty()) out.subjects.push_back(std::move(kept));
  }
  return out;
}

}  // namespace bivlmm
