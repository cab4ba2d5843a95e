#include "bivlmm/covariance.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bivlmm {

namespace {

int total_dim(const std::vector<int>& blocks) {
  int d = 0;
  for (int b : blocks) {
    if (b <= 0) throw std::invalid_argument("block sizes must be positive");
    d += b;
  }
  return d;
}

}  // namespace

int packed_spd_dim(const std::vector<int>& blocks) {
  int n = 0;
  for (int b : blocks) n += b * (b + 1) / 2;
  return n;
}

std::vector<LowerTriIndex> packed_spd_index(const std::vector<int>& blocks) {
  std::vector<LowerTriIndex> idx;
  idx.reserve(packed_spd_dim(blocks));
  int offset = 0;
  for (int b : blocks) {
    for (int c = 0; c < b; ++c) {
      for (int r = c; r < b; ++r) {
        idx.push_back({offset + r, offset + c});
      }
    }
    offset += b;
  }
  return idx;
}

Eigen::MatrixXd lower_factor_from_packed(const Eigen::VectorXd& v, const std::vector<int>& blocks) {
  const int d = total_dim(blocks);
  if (v.size() != packed_spd_dim(blocks)) {
    throw DimensionError("packed SPD vector has wrong length");
  }
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
  const auto idx = packed_spd_index(blocks);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto [r, c] = idx[k];
    L(r, c) = (r == c) ? std::exp(v[static_cast<Eigen::Index>(k)]) : v[static_cast<Eigen::Index>(k)];
  }
  return L;
}

Eigen::MatrixXd spd_from_packed(const Eigen::VectorXd& v, const std::vector<int>& blocks) {
  const Eigen::MatrixXd L = lower_factor_from_packed(v, blocks);
  return L * L.transpose();
}

Eigen::VectorXd pack_spd(const Eigen::MatrixXd& S, const std::vector<int>& blocks) {
  const int d = total_dim(blocks);
  if (S.rows() != d || S.cols() != d) throw DimensionError("matrix size does not match blocks");
  Eigen::VectorXd v(packed_spd_dim(blocks));
  int offset = 0;
  Eigen::Index pos = 0;
  for (int b : blocks) {
    const Eigen::MatrixXd block = S.block(offset, offset, b, b);
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    if (llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "diagonal block starting at " << offset << " is not positive definite";
      throw std::invalid_argument(os.str());
    }
    const Eigen::MatrixXd L = llt.matrixL();
    for (int c = 0; c < b; ++c) {
      for (int r = c; r < b; ++r) {
        v[pos++] = (r == c) ? std::log(L(r, c)) : L(r, c);
      }
    }
    offset += b;
  }
  return v;
}

Eigen::MatrixXd g_from_theta(const Eigen::VectorXd& theta_g, int dim, bool independence_mask) {
  if (dim < 0) throw std::invalid_argument("dimension must be non-negative");
  std::vector<int> blocks;
  if (independence_mask) {
    if (dim % 2 != 0) throw std::invalid_argument("masked covariance needs an even dimension");
    blocks = {dim / 2, dim / 2};
  } else {
    blocks = {dim};
  }
  if (theta_g.size() != packed_spd_dim(blocks)) {
    throw DimensionError("parameter vector length does not match covariance dimension");
  }
  return spd_from_packed(theta_g, blocks);
}

Eigen::MatrixXd serial_cov_rows(const KroneckerAr1& k, const std::vector<int>& process_of_row,
                                const std::vector<int>& occasion_of_row) {
  if (process_of_row.size() != occasion_of_row.size()) {
    throw DimensionError("row label vectors differ in length");
  }
  if (!(std::fabs(k.rho) < 1.0)) throw std::invalid_argument("serial rho must satisfy |rho| < 1");
  const int n = static_cast<int>(process_of_row.size());
  const int s = static_cast<int>(k.C.rows());
  Eigen::MatrixXd R(n, n);
  for (int i = 0; i < n; ++i) {
    const int a = process_of_row[i];
    if (a < 0 || a >= s) throw DimensionError("process index out of range for serial C");
    for (int j = 0; j <= i; ++j) {
      const int lag = std::abs(occasion_of_row[i] - occasion_of_row[j]);
      const double cov = k.C(a, process_of_row[j]) * std::pow(k.rho, lag);
      R(i, j) = cov;
      R(j, i) = cov;
    }
  }
  return R;
}

Eigen::MatrixXd build_serial_cov(const KroneckerAr1& k, const std::vector<int>& occasions0,
                                 const std::vector<int>& occasions1) {
  for (const auto* occ : {&occasions0, &occasions1}) {
    for (std::size_t i = 0; i < occ->size(); ++i) {
      if ((*occ)[i] < 0) throw std::invalid_argument("occasion indices must be non-negative");
      if (i > 0 && (*occ)[i] <= (*occ)[i - 1]) {
        throw std::invalid_argument("occasion lists must be strictly ascending");
      }
    }
  }
  std::vector<int> process;
  std::vector<int> occasion;
  process.reserve(occasions0.size() + occasions1.size());
  occasion.reserve(process.capacity());
  for (int o : occasions0) {
    process.push_back(0);
    occasion.push_back(o);
  }
  for (int o : occasions1) {
    process.push_back(1);
    occasion.push_back(o);
  }
  return serial_cov_rows(k, process, occasion);
}

Eigen::VectorXd error_diag_rows(const std::vector<double>& sigma2,
                                const std::vector<int>& process_of_row) {
  Eigen::VectorXd d(static_cast<Eigen::Index>(process_of_row.size()));
  for (std::size_t i = 0; i < process_of_row.size(); ++i) {
    const int a = process_of_row[i];
    if (a < 0 || a >= static_cast<int>(sigma2.size())) {
      throw DimensionError("process index out of range for error variances");
    }
    d[static_cast<Eigen::Index>(i)] = sigma2[a];
  }
  return d;
}

Eigen::MatrixXd build_marginal_cov(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& G,
                                   const Eigen::MatrixXd& R_serial,
                                   const Eigen::VectorXd& error_diag) {
  const Eigen::Index n = Z.rows() > 0 ? Z.rows() : (R_serial.rows() > 0 ? R_serial.rows() : error_diag.size());
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, n);
  if (G.size() > 0) {
    if (Z.cols() != G.rows()) throw DimensionError("Z columns do not match G dimension");
    V.noalias() += Z * G * Z.transpose();
  }
  if (R_serial.size() > 0) {
    if (R_serial.rows() != n) throw DimensionError("serial covariance size mismatch");
    V += R_serial;
  }
  if (error_diag.size() > 0) {
    if (error_diag.size() != n) throw DimensionError("error diagonal size mismatch");
    V.diagonal() += error_diag;
  }
  return V;
}

SpdFactor::SpdFactor(const Eigen::MatrixXd& V) {
  if (V.rows() == 0) {
    throw DimensionError("cannot factor an empty matrix");
  }
  ldlt_.compute(V);
  const Eigen::VectorXd D = ldlt_.vectorD();
  const double dmin = D.minCoeff();
  const double dmax = D.maxCoeff();
  bool healthy = ldlt_.info() == Eigen::Success && dmin > 0.0 && dmax <= 1e10 * dmin;
  if (healthy) {
    log_det_ = D.array().log().sum();
    return;
  }
  // Pivot spread looks bad; let the spectrum decide.
  eig_.compute(V);
  if (eig_.info() != Eigen::Success) throw NearSingularError("eigendecomposition failed");
  const Eigen::VectorXd ev = eig_.eigenvalues();
  const double emin = ev.minCoeff();
  const double emax = ev.maxCoeff();
  if (emin <= 0.0 || emax > 1e12 * emin) {
    std::ostringstream os;
    os << "covariance matrix is numerically singular (extreme eigenvalues " << emin << ", " << emax
       << ")";
    throw NearSingularError(os.str());
  }
  use_eigen_ = true;
  log_det_ = ev.array().log().sum();
}

Eigen::VectorXd SpdFactor::solve(const Eigen::VectorXd& b) const {
  if (!use_eigen_) return ldlt_.solve(b);
  const Eigen::VectorXd t = eig_.eigenvectors().transpose() * b;
  return eig_.eigenvectors() * (t.array() / eig_.eigenvalues().array()).matrix();
}

Eigen::MatrixXd SpdFactor::solve(const Eigen::MatrixXd& B) const {
  if (!use_eigen_) return ldlt_.solve(B);
  const Eigen::MatrixXd t = eig_.eigenvectors().transpose() * B;
  return eig_.eigenvectors() * eig_.eigenvalues().cwiseInverse().asDiagonal() * t;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S) {
  if (S.size() == 0) return S;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  if (eig.info() != Eigen::Success) throw std::invalid_argument("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd ev = eig.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1.0);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-10 * scale) {
      throw std::invalid_argument("psd_sqrt: matrix has a negative eigenvalue");
    }
    ev[i] = std::max(ev[i], 0.0);
  }
  return eig.eigenvectors() * ev.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace bivlmm
