#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <vector>

#include "bivlmm/covariance.hpp"
#include "bivlmm/data.hpp"
#include "bivlmm/estimation.hpp"
#include "bivlmm/simulate.hpp"

namespace {

using namespace bivlmm;

ModelSpec serial_spec() {
  ModelSpec spec;
  spec.random_effects = RandomEffects::None;
  spec.residual = ResidualKind::KroneckerAr1PlusError;
  return spec;
}

ModelSpec slopes_serial_spec() {
  ModelSpec spec;
  spec.residual = ResidualKind::KroneckerAr1PlusError;
  return spec;
}

// A realistic mid-size problem: 100 subjects, both markers at six visits.
const std::vector<SubjectDesign>& benchmark_designs() {
  static const std::vector<SubjectDesign> designs = [] {
    TruthParams truth;
    truth.beta = Eigen::Vector4d(0.05, -0.04, 3.0, -2.0);
    truth.serial.C.resize(2, 2);
    truth.serial.C << 1.54, -7.0, -7.0, 195.0;
    truth.serial.rho = 0.91;
    truth.error_var = {0.15, 77.0};
    SimulateOptions opts;
    opts.n_subjects = 100;
    opts.n_occasions = 6;
    opts.times = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    const StackedDataset data = simulate(truth, opts, 42);
    return build_design(data, DesignSpec{}, Scope::Bivariate);
  }();
  return designs;
}

void BM_SerialCovariance(benchmark::State& state) {
  const int n_occ = static_cast<int>(state.range(0));
  KroneckerAr1 k;
  k.C.resize(2, 2);
  k.C << 1.54, -7.0, -7.0, 195.0;
  k.rho = 0.91;
  std::vector<int> proc, occ;
  for (int p = 0; p < 2; ++p) {
    for (int j = 0; j < n_occ; ++j) {
      proc.push_back(p);
      occ.push_back(j);
    }
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(serial_cov_rows(k, proc, occ));
  }
}
BENCHMARK(BM_SerialCovariance)->Arg(4)->Arg(6)->Arg(12);

void BM_MarginalCovariance(benchmark::State& state) {
  const CovModel model(slopes_serial_spec());
  const CovarianceAtTheta cov = model.expand(Eigen::VectorXd::Constant(model.n_params(), 0.1));
  const SubjectDesign& d = benchmark_designs().front();
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.marginal_cov(cov, d));
  }
}
BENCHMARK(BM_MarginalCovariance);

void BM_ProfiledLikelihood(benchmark::State& state) {
  const auto& designs = benchmark_designs();
  const CovModel model(serial_spec());
  const Eigen::VectorXd theta = default_start(designs, model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(profiled_negloglik(designs, model, theta, Method::REML));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(designs.size()));
}
BENCHMARK(BM_ProfiledLikelihood)->Unit(benchmark::kMillisecond);

void BM_ObjectiveGradient(benchmark::State& state) {
  const auto& designs = benchmark_designs();
  const CovModel model(serial_spec());
  const Eigen::VectorXd theta = default_start(designs, model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(objective_gradient(designs, model, theta, Method::REML));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(designs.size()));
}
BENCHMARK(BM_ObjectiveGradient)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
