#pragma once

#include <Eigen/Dense>
#include <vector>

#include "bivlmm/types.hpp"

namespace bivlmm {

// --- Block-diagonal log-Cholesky parameterization ----------------------------
//
// An SPD matrix composed of independent diagonal blocks is represented by the
// stacked lower triangles of the per-block Cholesky factors, column-major
// within each block, with diagonal entries stored on log scale. This gives an
// unconstrained vector whose every value maps to a valid covariance matrix.
// `blocks` lists the block sizes; a single entry means a dense SPD matrix.

struct LowerTriIndex {
  int row = 0;
  int col = 0;
};

int packed_spd_dim(const std::vector<int>& blocks);

// For each packed position, the (row, col) of the factor entry it controls.
std::vector<LowerTriIndex> packed_spd_index(const std::vector<int>& blocks);

Eigen::MatrixXd lower_factor_from_packed(const Eigen::VectorXd& v, const std::vector<int>& blocks);
Eigen::MatrixXd spd_from_packed(const Eigen::VectorXd& v, const std::vector<int>& blocks);

// Inverse map; requires every diagonal block of S to be positive definite and
// the off-block entries to be zero (enforced only by ignoring them).
Eigen::VectorXd pack_spd(const Eigen::MatrixXd& S, const std::vector<int>& blocks);

// Random-effects covariance from an unconstrained vector. With
// independence_mask the cross-marker block is forced to zero by splitting the
// factor into two dim/2 blocks (dim must be even), dropping the cross entries
// from the parameter vector: dim 4 has 10 free entries dense, 6 masked.
Eigen::MatrixXd g_from_theta(const Eigen::VectorXd& theta_g, int dim, bool independence_mask);

// --- Serial process: cross-process covariance x AR(1) in occasion lag --------
//
// Two (or one) latent processes observed on a shared occasion grid. The
// covariance between row i on process a at occasion j and row k on process b
// at occasion m is C(a, b) * rho^{|j - m|}. With every occasion observed for
// both processes this is the Kronecker product of C with an AR(1) correlation
// matrix; with intermittent gaps the lag rule above still applies because lags
// count grid occasions, not observation order.

struct KroneckerAr1 {
  Eigen::MatrixXd C;  // s x s symmetric PSD, s = number of processes
  double rho = 0.0;   // |rho| < 1
};

Eigen::MatrixXd serial_cov_rows(const KroneckerAr1& k, const std::vector<int>& process_of_row,
                                const std::vector<int>& occasion_of_row);

// Block-ordered convenience form: rows are process 0 at `occasions0`, then
// process 1 at `occasions1`.
Eigen::MatrixXd build_serial_cov(const KroneckerAr1& k, const std::vector<int>& occasions0,
                                 const std::vector<int>& occasions1);

// Heterogeneous measurement error: per-row variance sigma2[process_of_row[i]].
Eigen::VectorXd error_diag_rows(const std::vector<double>& sigma2,
                                const std::vector<int>& process_of_row);

// V = Z G Z^T + R + diag(error). Any piece may be empty (size 0) to omit it.
Eigen::MatrixXd build_marginal_cov(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& G,
                                   const Eigen::MatrixXd& R_serial,
                                   const Eigen::VectorXd& error_diag);

// --- SPD factorization with conditioning guard --------------------------------
//
// LDLT is the workhorse. If the pivot spread suggests trouble (ratio > 1e10 or
// a non-positive pivot) the exact spectral condition number is checked; beyond
// 1e12 the matrix is treated as numerically singular and NearSingularError is
// thrown. In the rare healthy-spectrum/ugly-pivot case solves fall back to the
// eigendecomposition.
class SpdFactor {
 public:
  explicit SpdFactor(const Eigen::MatrixXd& V);

  double log_det() const { return log_det_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;

 private:
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_;
  bool use_eigen_ = false;
  double log_det_ = 0.0;
};

// Symmetric PSD square root via eigendecomposition; eigenvalues within a small
// negative tolerance are clamped to zero, anything more negative throws.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S);

}  // namespace bivlmm
