#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "bivlmm/covariance.hpp"
#include "bivlmm/rng.hpp"
#include "bivlmm/types.hpp"
#include "oracles.hpp"

using namespace bivlmm;

namespace {

Eigen::MatrixXd ar1_corr(int n, double rho) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = std::pow(rho, std::abs(i - j));
  return m;
}

}  // namespace

TEST_CASE("packed dimensions count lower triangles per block", "[covariance]") {
  CHECK(packed_spd_dim({2}) == 3);
  CHECK(packed_spd_dim({4}) == 10);
  CHECK(packed_spd_dim({2, 2}) == 6);
  CHECK(packed_spd_dim({1}) == 1);
}

TEST_CASE("zero parameter vector maps to the identity", "[covariance]") {
  const Eigen::MatrixXd g2 = g_from_theta(Eigen::VectorXd::Zero(3), 2, false);
  CHECK((g2 - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::MatrixXd g4 = g_from_theta(Eigen::VectorXd::Zero(6), 4, true);
  CHECK((g4 - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("independence mask zeroes the cross-marker block", "[covariance]") {
  CounterRng rng(11);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd v = oracle::random_vector(rng, 6, -1.2, 1.2);
    const Eigen::MatrixXd g = g_from_theta(v, 4, true);
    CHECK(g.block(2, 0, 2, 2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.block(0, 2, 2, 2).cwiseAbs().maxCoeff() == 0.0);
    // Still a valid covariance.
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  }
  CHECK(g_from_theta(Eigen::VectorXd::Zero(10), 4, false).rows() == 4);
  CHECK_THROWS_AS(g_from_theta(Eigen::VectorXd::Zero(5), 4, true), DimensionError);
  CHECK_THROWS_AS(g_from_theta(Eigen::VectorXd::Zero(6), 3, true), std::invalid_argument);
}

TEST_CASE("every unconstrained vector yields a PSD matrix", "[covariance][property]") {
  CounterRng rng(101);
  for (int t = 0; t < 1000; ++t) {
    const bool masked = (t % 2) == 0;
    const int dim = masked ? 4 : 2 + (t % 3);
    const int n_par = masked ? 6 : dim * (dim + 1) / 2;
    const Eigen::VectorXd v = oracle::random_vector(rng, n_par, -2.0, 2.0);
    const Eigen::MatrixXd g = g_from_theta(v, dim, masked);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    REQUIRE(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, g.norm()));
  }
}

TEST_CASE("pack and expand are mutually inverse", "[covariance][property]") {
  CounterRng rng(202);
  const std::vector<std::vector<int>> layouts = {{2}, {4}, {2, 2}, {3}, {1, 1}};
  for (const auto& blocks : layouts) {
    for (int t = 0; t < 40; ++t) {
      const int n_par = packed_spd_dim(blocks);
      const Eigen::VectorXd v = oracle::random_vector(rng, n_par, -1.5, 1.5);
      const Eigen::MatrixXd s = spd_from_packed(v, blocks);
      const Eigen::VectorXd v_back = pack_spd(s, blocks);
      REQUIRE((v - v_back).cwiseAbs().maxCoeff() < 1e-10);
      const Eigen::MatrixXd s_back = spd_from_packed(v_back, blocks);
      REQUIRE((s - s_back).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, s.norm()));
    }
  }
}

TEST_CASE("complete balanced serial covariance is the literal Kronecker product",
          "[covariance]") {
  KroneckerAr1 k;
  k.C.resize(2, 2);
  k.C << 1.54, -7.0, -7.0, 195.0;
  k.rho = 0.91;
  const std::vector<int> occ = {0, 1, 2};
  const Eigen::MatrixXd r = build_serial_cov(k, occ, occ);
  const Eigen::MatrixXd expected = oracle::kron(k.C, ar1_corr(3, k.rho));
  CHECK((r - expected).cwiseAbs().maxCoeff() < 1e-12 * expected.cwiseAbs().maxCoeff());

  // Intra-marker block has the AR(1) profile [1, rho, rho^2] scaled by C(0,0).
  CHECK(r(0, 0) == Catch::Approx(1.54));
  CHECK(r(0, 1) == Catch::Approx(1.54 * 0.91));
  CHECK(r(0, 2) == Catch::Approx(1.54 * 0.91 * 0.91));
}

TEST_CASE("rho = 0 collapses to C Kronecker identity", "[covariance]") {
  KroneckerAr1 k;
  k.C.resize(2, 2);
  k.C << 2.0, 0.5, 0.5, 3.0;
  k.rho = 0.0;
  const std::vector<int> occ = {0, 1, 2};
  const Eigen::MatrixXd r = build_serial_cov(k, occ, occ);
  CHECK((r - oracle::kron(k.C, Eigen::MatrixXd::Identity(3, 3))).cwiseAbs().maxCoeff() <
        1e-15);
}

TEST_CASE("Kronecker equivalence holds over random draws", "[covariance][property]") {
  CounterRng rng(303);
  for (int t = 0; t < 200; ++t) {
    KroneckerAr1 k;
    k.C = oracle::random_spd(rng, 2, 0.5);
    k.rho = oracle::runif(rng, -0.95, 0.95);
    const int n_occ = 2 + (t % 5);
    std::vector<int> occ(static_cast<std::size_t>(n_occ));
    for (int j = 0; j < n_occ; ++j) occ[static_cast<std::size_t>(j)] = j;
    const Eigen::MatrixXd r = build_serial_cov(k, occ, occ);
    const Eigen::MatrixXd expected = oracle::kron(k.C, ar1_corr(n_occ, k.rho));
    REQUIRE((r - expected).cwiseAbs().maxCoeff() <
            1e-12 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("gapped occasions follow the brute-force entry rule", "[covariance][property]") {
  CounterRng rng(404);
  for (int t = 0; t < 100; ++t) {
    KroneckerAr1 k;
    k.C = oracle::random_spd(rng, 2, 0.5);
    k.rho = oracle::runif(rng, -0.9, 0.9);
    // Random strictly increasing occasion subsets, possibly different per marker.
    auto subset = [&] {
      std::vector<int> v;
      int cur = static_cast<int>(oracle::runif(rng, 0.0, 2.0));
      const int n = 1 + static_cast<int>(oracle::runif(rng, 0.0, 4.0));
      for (int j = 0; j < n; ++j) {
        v.push_back(cur);
        cur += 1 + static_cast<int>(oracle::runif(rng, 0.0, 3.0));
      }
      return v;
    };
    const std::vector<int> occ0 = subset(), occ1 = subset();
    std::vector<int> proc, occ;
    for (int o : occ0) { proc.push_back(0); occ.push_back(o); }
    for (int o : occ1) { proc.push_back(1); occ.push_back(o); }
    const Eigen::MatrixXd r = build_serial_cov(k, occ0, occ1);
    const Eigen::MatrixXd expected = oracle::serial_ref(k.C, k.rho, proc, occ);
    REQUIRE((r - expected).cwiseAbs().maxCoeff() <
            1e-13 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("intermittent gap correlation uses occasion lag, not position", "[covariance]") {
  // Occasions {1, 3}: adjacent rows, but the lag is 2, so correlation rho^2.
  KroneckerAr1 k;
  k.C.resize(1, 1);
  k.C << 2.5;
  k.rho = 0.7;
  const Eigen::MatrixXd r = serial_cov_rows(k, {0, 0}, {1, 3});
  CHECK(r(0, 1) == Catch::Approx(2.5 * 0.7 * 0.7).epsilon(1e-14));
  CHECK(r(0, 1) / std::sqrt(r(0, 0) * r(1, 1)) == Catch::Approx(0.49).epsilon(1e-14));
}

TEST_CASE("cross-marker serial correlation is proportional at every lag", "[covariance]") {
  KroneckerAr1 k;
  k.C.resize(2, 2);
  k.C << 1.54, -7.0, -7.0, 195.0;
  k.rho = 0.91;
  const std::vector<int> occ = {0, 1, 2, 3};
  const Eigen::MatrixXd r = build_serial_cov(k, occ, occ);
  const int n = 4;
  for (int j = 0; j < n; ++j)
    for (int m = 0; m < n; ++m) {
      // Cross block entry = C12 * rho^|j-m|, so dividing by rho^lag is constant.
      const double lag = std::abs(j - m);
      CHECK(r(j, n + m) == Catch::Approx(-7.0 * std::pow(0.91, lag)).epsilon(1e-12));
    }
  // Lag-1 correlation is the same rho within both marker blocks.
  const double corr_m1 = r(0, 1) / std::sqrt(r(0, 0) * r(1, 1));
  const double corr_m2 = r(n, n + 1) / std::sqrt(r(n, n) * r(n + 1, n + 1));
  CHECK(corr_m1 == Catch::Approx(0.91).epsilon(1e-12));
  CHECK(corr_m2 == Catch::Approx(0.91).epsilon(1e-12));
}

TEST_CASE("serial construction rejects malformed occasion lists", "[covariance]") {
  KroneckerAr1 k;
  k.C.resize(2, 2);
  k.C << 1.0, 0.0, 0.0, 1.0;
  k.rho = 0.5;
  CHECK_THROWS_AS(build_serial_cov(k, {2, 1}, {0}), std::invalid_argument);
  CHECK_THROWS_AS(build_serial_cov(k, {-1, 0}, {0}), std::invalid_argument);
  // Process label outside C's dimension.
  CHECK_THROWS_AS(serial_cov_rows(k, {0, 2}, {0, 1}), DimensionError);
}

TEST_CASE("marginal covariance sums its three components", "[covariance]") {
  // No components: zero matrix of the right size needs at least one piece, so
  // pass error only.
  Eigen::VectorXd err(2);
  err << 1.0, 1.0;
  const Eigen::MatrixXd v0 =
      build_marginal_cov(Eigen::MatrixXd(), Eigen::MatrixXd(), Eigen::MatrixXd(), err);
  CHECK((v0 - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);

  // Single observation: v = z G z' + sigma^2 is scalar arithmetic.
  Eigen::MatrixXd z(1, 2);
  z << 1.0, 3.0;
  Eigen::MatrixXd g(2, 2);
  g << 2.0, 0.5, 0.5, 1.0;
  Eigen::VectorXd e1(1);
  e1 << 0.25;
  const Eigen::MatrixXd v1 = build_marginal_cov(z, g, Eigen::MatrixXd(), e1);
  CHECK(v1(0, 0) == Catch::Approx(2.0 + 2 * 3.0 * 0.5 + 9.0 * 1.0 + 0.25));

  // Random instance vs. elementwise oracle.
  CounterRng rng(505);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + (t % 5);
    Eigen::MatrixXd zz(n, 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 2; ++j) zz(i, j) = oracle::runif(rng, -2.0, 2.0);
    const Eigen::MatrixXd gg = oracle::random_spd(rng, 2, 0.3);
    KroneckerAr1 k;
    k.C = oracle::random_spd(rng, 1, 0.3);
    k.rho = oracle::runif(rng, -0.8, 0.8);
    std::vector<int> occ(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) occ[static_cast<std::size_t>(i)] = i;
    const Eigen::MatrixXd serial = serial_cov_rows(k, std::vector<int>(n, 0), occ);
    Eigen::VectorXd ee(n);
    for (int i = 0; i < n; ++i) ee(i) = oracle::runif(rng, 0.05, 1.0);
    const Eigen::MatrixXd v = build_marginal_cov(zz, gg, serial, ee);
    const Eigen::MatrixXd expected =
        zz * gg * zz.transpose() + serial + Eigen::MatrixXd(ee.asDiagonal());
    REQUIRE((v - expected).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, v.norm()));
    REQUIRE((v - v.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
    REQUIRE(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("SPD factor reproduces determinant and solves", "[covariance]") {
  CounterRng rng(606);
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + (t % 6);
    const Eigen::MatrixXd v = oracle::random_spd(rng, n, 0.5);
    const SpdFactor f(v);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
    REQUIRE(f.log_det() ==
            Catch::Approx(es.eigenvalues().array().log().sum()).epsilon(1e-9));
    const Eigen::VectorXd b = oracle::random_vector(rng, n, -1.0, 1.0);
    const Eigen::VectorXd x = f.solve(b);
    REQUIRE((v * x - b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("SPD factor rejects numerically singular matrices", "[covariance]") {
  Eigen::MatrixXd v(2, 2);
  v << 1.0, 0.0, 0.0, 1e-14;
  CHECK_THROWS_AS(SpdFactor(v), NearSingularError);
}

TEST_CASE("psd_sqrt squares back to the input", "[covariance]") {
  CounterRng rng(707);
  for (int t = 0; t < 20; ++t) {
    const Eigen::MatrixXd s = oracle::random_spd(rng, 3, 0.2);
    const Eigen::MatrixXd r = psd_sqrt(s);
    CHECK((r * r.transpose() - s).cwiseAbs().maxCoeff() < 1e-10 * s.norm());
  }
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  CHECK_THROWS(psd_sqrt(bad));
}
