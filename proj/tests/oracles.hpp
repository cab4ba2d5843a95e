#pragma once

// Reference implementations used to cross-check the library. Everything here
// deliberately takes the dumbest possible route (elementwise loops, full
// eigendecompositions, textbook series) so that agreement with the optimized
// code paths is meaningful.

#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "bivlmm/data.hpp"
#include "bivlmm/estimation.hpp"
#include "bivlmm/rng.hpp"
#include "bivlmm/types.hpp"

namespace oracle {

// Upper tail of the chi-square distribution for integer df, via the classic
// closed-form recurrence (erfc base for odd df, exponential base for even df).
// Independent of the incomplete-gamma series/continued-fraction route used by
// the library.
inline double chisq_tail_ref(double x, int df) {
  if (df < 1) throw std::invalid_argument("chisq_tail_ref: df must be >= 1");
  if (x < 0.0) throw std::invalid_argument("chisq_tail_ref: x must be >= 0");
  if (x == 0.0) return 1.0;
  const double h = 0.5 * x;
  double q, term;
  int k;
  if (df % 2 == 1) {
    q = std::erfc(std::sqrt(h));
    term = 2.0 * std::sqrt(h / M_PI) * std::exp(-h);
    k = 1;
  } else {
    q = std::exp(-h);
    term = h * std::exp(-h);
    k = 2;
  }
  while (k < df) {
    q += term;
    k += 2;
    term *= 2.0 * h / static_cast<double>(k);
  }
  return q;
}

// Literal Kronecker product.
inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Serial covariance assembled entry by entry from the defining rule:
// cov between (process p_i, occasion o_i) and (process p_k, occasion o_k)
// equals C(p_i, p_k) * rho^|o_i - o_k|.
inline Eigen::MatrixXd serial_ref(const Eigen::MatrixXd& c, double rho,
                                  const std::vector<int>& proc,
                                  const std::vector<int>& occ) {
  const int n = static_cast<int>(proc.size());
  Eigen::MatrixXd r(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      r(i, k) = c(proc[i], proc[k]) * std::pow(rho, std::abs(occ[i] - occ[k]));
  return r;
}

// Natural-scale covariance inputs for the reference likelihood. Empty matrix /
// empty vector means that component is absent.
struct RefParams {
  Eigen::MatrixXd G;
  Eigen::MatrixXd C;
  double rho = 0.0;
  std::vector<double> error_var;  // indexed by process (0/1)
};

// Marker -> process index relative to the model's active-marker list, so a
// single-marker scope indexes 1x1 C and one error variance correctly.
inline std::vector<int> process_of_rows(const bivlmm::SubjectDesign& d,
                                        const std::vector<bivlmm::Marker>& active) {
  std::vector<int> proc(d.rows());
  for (int i = 0; i < d.rows(); ++i) {
    const bivlmm::Marker m = d.marker_of_row[static_cast<std::size_t>(i)];
    int idx = -1;
    for (std::size_t a = 0; a < active.size(); ++a)
      if (active[a] == m) idx = static_cast<int>(a);
    if (idx < 0) throw std::runtime_error("row marker not in active list");
    proc[i] = idx;
  }
  return proc;
}

// Per-subject marginal covariance assembled with explicit loops.
inline Eigen::MatrixXd subject_cov_ref(const bivlmm::SubjectDesign& d,
                                       const RefParams& p,
                                       const std::vector<bivlmm::Marker>& active) {
  const int n = d.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, n);
  if (p.G.size() > 0) {
    const int q = static_cast<int>(p.G.rows());
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int r = 0; r < q; ++r)
          for (int s = 0; s < q; ++s) acc += d.Z(i, r) * p.G(r, s) * d.Z(k, s);
        v(i, k) += acc;
      }
  }
  const std::vector<int> proc = process_of_rows(d, active);
  if (p.C.size() > 0) {
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k)
        v(i, k) += p.C(proc[i], proc[k]) *
                   std::pow(p.rho, std::abs(d.occasion_of_row[static_cast<std::size_t>(i)] -
                                            d.occasion_of_row[static_cast<std::size_t>(k)]));
  }
  if (!p.error_var.empty())
    for (int i = 0; i < n; ++i) v(i, i) += p.error_var[static_cast<std::size_t>(proc[i])];
  return v;
}

// Log density of N(mean, V) evaluated by full symmetric eigendecomposition —
// a different factorization route than the LDLT used in the library.
inline double mvn_neg_log_density_ref(const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& mean,
                                      const Eigen::MatrixXd& v) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("mvn_neg_log_density_ref: eigendecomposition failed");
  const Eigen::VectorXd lam = es.eigenvalues();
  if (lam.minCoeff() <= 0.0)
    throw std::runtime_error("mvn_neg_log_density_ref: covariance not positive definite");
  const Eigen::VectorXd w = es.eigenvectors().transpose() * (y - mean);
  double logdet = 0.0, quad = 0.0;
  for (int i = 0; i < lam.size(); ++i) {
    logdet += std::log(lam(i));
    quad += w(i) * w(i) / lam(i);
  }
  const int n = static_cast<int>(y.size());
  return 0.5 * (n * std::log(2.0 * M_PI) + logdet + quad);
}

struct RefLikelihood {
  double negloglik = 0.0;
  Eigen::VectorXd beta;
};

// Fully stacked reference likelihood: build the complete block-diagonal
// covariance, solve the generalized least squares problem by eigendecomposition,
// and evaluate the profiled ML or REML objective directly from its definition.
inline RefLikelihood profiled_nll_ref(const std::vector<bivlmm::SubjectDesign>& designs,
                                      const RefParams& p,
                                      const std::vector<bivlmm::Marker>& active,
                                      bivlmm::Method method) {
  int n_total = 0;
  for (const auto& d : designs) n_total += d.rows();
  const int p_fixed = static_cast<int>(designs.front().X.cols());

  Eigen::MatrixXd x_full = Eigen::MatrixXd::Zero(n_total, p_fixed);
  Eigen::VectorXd y_full(n_total);
  Eigen::MatrixXd v_full = Eigen::MatrixXd::Zero(n_total, n_total);
  int at = 0;
  for (const auto& d : designs) {
    const int n = d.rows();
    x_full.block(at, 0, n, p_fixed) = d.X;
    y_full.segment(at, n) = d.y;
    v_full.block(at, at, n, n) = subject_cov_ref(d, p, active);
    at += n;
  }

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v_full);
  const Eigen::VectorXd lam = es.eigenvalues();
  if (lam.minCoeff() <= 0.0)
    throw std::runtime_error("profiled_nll_ref: stacked covariance not positive definite");
  const Eigen::MatrixXd u = es.eigenvectors();
  Eigen::MatrixXd v_inv = u * lam.cwiseInverse().asDiagonal() * u.transpose();
  double logdet_v = lam.array().log().sum();

  const Eigen::MatrixXd a = x_full.transpose() * v_inv * x_full;
  const Eigen::VectorXd b = x_full.transpose() * v_inv * y_full;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(a);
  const Eigen::VectorXd lam_a = es_a.eigenvalues();
  if (lam_a.minCoeff() <= 0.0)
    throw std::runtime_error("profiled_nll_ref: normal equations not positive definite");
  const Eigen::VectorXd beta =
      es_a.eigenvectors() * (es_a.eigenvectors().transpose() * b).cwiseQuotient(lam_a);
  const Eigen::VectorXd resid = y_full - x_full * beta;
  const double quad = resid.dot(v_inv * resid);

  RefLikelihood out;
  out.beta = beta;
  if (method == bivlmm::Method::ML) {
    out.negloglik = 0.5 * (n_total * std::log(2.0 * M_PI) + logdet_v + quad);
  } else {
    const double logdet_a = lam_a.array().log().sum();
    out.negloglik = 0.5 * ((n_total - p_fixed) * std::log(2.0 * M_PI) + logdet_v + quad +
                           logdet_a);
  }
  return out;
}

// Central finite differences with the per-coordinate step h = scale*(1+|x_j|).
template <typename F>
Eigen::VectorXd fd_gradient(const F& f, const Eigen::VectorXd& x, double scale = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (int j = 0; j < x.size(); ++j) {
    const double h = scale * (1.0 + std::abs(x(j)));
    Eigen::VectorXd hi = x, lo = x;
    hi(j) += h;
    lo(j) -= h;
    g(j) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

// Deterministic scalar helpers on top of the library's counter RNG. Tests use
// these rather than <random> engines so draws are identical on every platform.
inline double runif(bivlmm::CounterRng& rng, double lo, double hi) {
  return lo + (hi - lo) * rng.next_uniform();
}

inline Eigen::MatrixXd random_spd(bivlmm::CounterRng& rng, int n, double jitter = 1.0) {
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = runif(rng, -1.0, 1.0);
  return a * a.transpose() + jitter * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::VectorXd random_vector(bivlmm::CounterRng& rng, int n, double lo, double hi) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = runif(rng, lo, hi);
  return v;
}

}  // namespace oracle
