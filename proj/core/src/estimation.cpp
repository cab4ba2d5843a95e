#include "bivlmm/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bivlmm/stats.hpp"

namespace bivlmm {

const char* to_string(Method m) { return m == Method::ML ? "ML" : "REML"; }
const char* to_string(RandomEffects r) { return r == RandomEffects::None ? "none" : "slopes"; }
const char* to_string(ResidualKind k) {
  switch (k) {
    case ResidualKind::GroupedDiagonal: return "grouped_diagonal";
    case ResidualKind::KroneckerAr1PlusError: return "kronecker_ar1_plus_error";
    default: return "kronecker_ar1_only";
  }
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// With serial correlation, forcing the markers independent also gives each
// marker its own autocorrelation, so the joint parameterization cannot
// represent the model; it is fitted one marker at a time instead.
bool needs_pair_fit(const ModelSpec& spec) {
  return spec.scope == Scope::Bivariate && spec.independent_markers &&
         residual_has_serial(spec.residual);
}

std::vector<Marker> active_markers_for(Scope scope) {
  switch (scope) {
    case Scope::Bivariate: return {Marker::M1, Marker::M2};
    case Scope::M1Only: return {Marker::M1};
    default: return {Marker::M2};
  }
}

Eigen::MatrixXd block_lower_factor(const Eigen::MatrixXd& S, const std::vector<int>& blocks) {
  return lower_factor_from_packed(pack_spd(S, blocks), blocks);
}

}  // namespace

int fixed_effect_count(const ModelSpec& spec) {
  return static_cast<int>(fixed_effect_names(spec.design, spec.scope).size());
}

int covariance_parameter_count(const ModelSpec& spec) {
  if (needs_pair_fit(spec)) {
    ModelSpec part = spec;
    part.independent_markers = false;
    part.scope = Scope::M1Only;
    const int q1 = CovModel(part).n_params();
    part.scope = Scope::M2Only;
    return q1 + CovModel(part).n_params();
  }
  return CovModel(spec).n_params();
}

int parameter_count(const ModelSpec& spec) {
  return fixed_effect_count(spec) + covariance_parameter_count(spec);
}

CovModel::CovModel(const ModelSpec& spec) : spec_(spec) {
  spec_.design.validate();
  if (needs_pair_fit(spec_)) {
    throw ConfigError(
        "independent-marker models with serial correlation are fitted one marker at a time; "
        "use fit_model");
  }
  markers_ = active_markers_for(spec_.scope);
  const int s = static_cast<int>(markers_.size());
  std::vector<int> zcols;
  zcols.reserve(markers_.size());
  for (Marker m : markers_) zcols.push_back(spec_.design.columns_per_marker(m));

  int pos = 0;
  if (spec_.random_effects == RandomEffects::Slopes) {
    if (s == 2 && spec_.independent_markers) g_blocks_ = {zcols[0], zcols[1]};
    else if (s == 2) g_blocks_ = {zcols[0] + zcols[1]};
    else g_blocks_ = {zcols[0]};
    g_idx_ = packed_spd_index(g_blocks_);
    g_offset_ = pos;
    g_count_ = packed_spd_dim(g_blocks_);
    pos += g_count_;
  }
  if (residual_has_serial(spec_.residual)) {
    c_blocks_ = {s};
    c_idx_ = packed_spd_index(c_blocks_);
    c_offset_ = pos;
    c_count_ = packed_spd_dim(c_blocks_);
    pos += c_count_;
    rho_offset_ = pos++;
  }
  err_offset_ = pos;
  err_count_ = residual_has_error(spec_.residual) ? s : 0;
  pos += err_count_;
  total_ = pos;
}

CovarianceAtTheta CovModel::expand(const Eigen::VectorXd& theta) const {
  if (theta.size() != total_) throw DimensionError("covariance parameter vector has wrong length");
  CovarianceAtTheta out;
  if (!g_blocks_.empty()) {
    out.g_factor = lower_factor_from_packed(theta.segment(g_offset_, g_count_), g_blocks_);
    out.G = out.g_factor * out.g_factor.transpose();
  }
  if (!c_blocks_.empty()) {
    out.c_factor = lower_factor_from_packed(theta.segment(c_offset_, c_count_), c_blocks_);
    out.serial.C = out.c_factor * out.c_factor.transpose();
    out.serial.rho = std::tanh(theta[rho_offset_]);
  }
  out.error_var.resize(err_count_);
  for (int i = 0; i < err_count_; ++i) out.error_var[i] = std::exp(theta[err_offset_ + i]);
  return out;
}

Eigen::VectorXd CovModel::pack(const CovarianceAtTheta& nat) const {
  Eigen::VectorXd theta(total_);
  if (!g_blocks_.empty()) {
    theta.segment(g_offset_, g_count_) = pack_spd(nat.G, g_blocks_);
  }
  if (!c_blocks_.empty()) {
    theta.segment(c_offset_, c_count_) = pack_spd(nat.serial.C, c_blocks_);
    if (!(std::fabs(nat.serial.rho) < 1.0)) {
      throw std::invalid_argument("serial rho must satisfy |rho| < 1");
    }
    theta[rho_offset_] = std::atanh(nat.serial.rho);
  }
  if (static_cast<int>(nat.error_var.size()) != err_count_) {
    throw DimensionError("wrong number of error variances");
  }
  for (int i = 0; i < err_count_; ++i) {
    if (!(nat.error_var[i] > 0.0)) throw std::invalid_argument("error variances must be positive");
    theta[err_offset_ + i] = std::log(nat.error_var[i]);
  }
  return theta;
}

std::vector<std::string> CovModel::param_names() const {
  std::vector<std::string> names;
  names.reserve(total_);
  const auto effects = fixed_effect_names(spec_.design, spec_.scope);
  for (const auto& [r, c] : g_idx_) {
    names.push_back(r == c ? "var(" + effects[r] + ")"
                           : "cov(" + effects[c] + "," + effects[r] + ")");
  }
  auto mk = [&](int i) { return std::string(to_string(markers_[i])); };
  for (const auto& [r, c] : c_idx_) {
    names.push_back(r == c ? "serial.var(" + mk(r) + ")"
                           : "serial.cov(" + mk(c) + "," + mk(r) + ")");
  }
  if (rho_offset_ >= 0) {
    names.push_back(spec_.scope == Scope::Bivariate ? "serial.rho" : "serial.rho(" + mk(0) + ")");
  }
  for (int i = 0; i < err_count_; ++i) names.push_back("error.var(" + mk(i) + ")");
  return names;
}

Eigen::VectorXd CovModel::natural(const Eigen::VectorXd& theta) const {
  const CovarianceAtTheta cov = expand(theta);
  Eigen::VectorXd nat(total_);
  Eigen::Index pos = 0;
  for (const auto& [r, c] : g_idx_) nat[pos++] = cov.G(r, c);
  for (const auto& [r, c] : c_idx_) nat[pos++] = cov.serial.C(r, c);
  if (rho_offset_ >= 0) nat[pos++] = cov.serial.rho;
  for (int i = 0; i < err_count_; ++i) nat[pos++] = cov.error_var[i];
  return nat;
}

std::vector<CovModel::NaturalParamInfo> CovModel::natural_info() const {
  std::vector<NaturalParamInfo> info;
  info.reserve(total_);
  // Marker owning each random-effect column.
  std::vector<int> col_marker;
  for (std::size_t k = 0; k < markers_.size(); ++k) {
    const int cols = spec_.design.columns_per_marker(markers_[k]);
    col_marker.insert(col_marker.end(), cols, static_cast<int>(k));
  }
  for (const auto& [r, c] : g_idx_) {
    if (r == c) info.push_back({NaturalKind::Variance, col_marker[r]});
    else if (col_marker[r] == col_marker[c]) info.push_back({NaturalKind::Covariance, col_marker[r]});
    else info.push_back({NaturalKind::Covariance, -1});
  }
  for (const auto& [r, c] : c_idx_) {
    if (r == c) info.push_back({NaturalKind::Variance, r});
    else info.push_back({NaturalKind::Covariance, -1});
  }
  if (rho_offset_ >= 0) {
    info.push_back({NaturalKind::Correlation, spec_.scope == Scope::Bivariate ? -1 : 0});
  }
  for (int i = 0; i < err_count_; ++i) info.push_back({NaturalKind::Variance, i});
  return info;
}

std::vector<int> CovModel::process_of_rows(const SubjectDesign& d) const {
  std::vector<int> proc(d.marker_of_row.size());
  for (std::size_t i = 0; i < d.marker_of_row.size(); ++i) {
    int k = -1;
    for (std::size_t j = 0; j < markers_.size(); ++j) {
      if (markers_[j] == d.marker_of_row[i]) k = static_cast<int>(j);
    }
    if (k < 0) {
      throw DimensionError("subject " + d.subject_id + " has rows outside the model scope");
    }
    proc[i] = k;
  }
  return proc;
}

Eigen::MatrixXd CovModel::marginal_cov(const CovarianceAtTheta& cov, const SubjectDesign& d) const {
  const auto proc = process_of_rows(d);
  Eigen::MatrixXd R;
  if (!c_blocks_.empty()) R = serial_cov_rows(cov.serial, proc, d.occasion_of_row);
  Eigen::VectorXd err;
  if (err_count_ > 0) err = error_diag_rows(cov.error_var, proc);
  return build_marginal_cov(d.Z, cov.G, R, err);
}

Eigen::MatrixXd CovModel::marginal_cov_derivative(const CovarianceAtTheta& cov,
                                                  const SubjectDesign& d, int j) const {
  if (j < 0 || j >= total_) throw std::out_of_range("covariance parameter index out of range");
  const int n = static_cast<int>(d.marker_of_row.size());
  const auto proc = process_of_rows(d);

  if (!g_blocks_.empty() && j < g_offset_ + g_count_) {
    const auto [r, c] = g_idx_[j - g_offset_];
    const Eigen::MatrixXd L =
        cov.g_factor.size() > 0 ? cov.g_factor : block_lower_factor(cov.G, g_blocks_);
    const double a = (r == c) ? L(r, c) : 1.0;
    const Eigen::VectorXd zr = d.Z.col(r);
    const Eigen::VectorXd zc = d.Z * L.col(c);
    return a * (zr * zc.transpose() + zc * zr.transpose());
  }
  if (!c_blocks_.empty() && j < c_offset_ + c_count_) {
    const auto [r, c] = c_idx_[j - c_offset_];
    const int s = static_cast<int>(cov.serial.C.rows());
    const Eigen::MatrixXd L =
        cov.c_factor.size() > 0 ? cov.c_factor : block_lower_factor(cov.serial.C, c_blocks_);
    const double a = (r == c) ? L(r, c) : 1.0;
    Eigen::MatrixXd cdot = Eigen::MatrixXd::Zero(s, s);
    cdot.row(r) += a * L.col(c).transpose();
    cdot.col(r) += a * L.col(c);
    return serial_cov_rows({cdot, cov.serial.rho}, proc, d.occasion_of_row);
  }
  if (j == rho_offset_) {
    const double rho = cov.serial.rho;
    Eigen::MatrixXd dR(n, n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k <= i; ++k) {
        const int lag = std::abs(d.occasion_of_row[i] - d.occasion_of_row[k]);
        const double v = lag == 0 ? 0.0
                                  : cov.serial.C(proc[i], proc[k]) * lag * std::pow(rho, lag - 1);
        dR(i, k) = v;
        dR(k, i) = v;
      }
    }
    return (1.0 - rho * rho) * dR;  // chain rule through rho = tanh(u)
  }
  const int k = j - err_offset_;
  Eigen::MatrixXd dV = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (proc[i] == k) dV(i, i) = cov.error_var[k];  // log-scale parameter
  }
  return dV;
}

// --- likelihood ---------------------------------------------------------------

namespace {

struct EvalOutput {
  LikelihoodEval lik;
  Eigen::VectorXd grad;
};

EvalOutput evaluate_objective(const std::vector<SubjectDesign>& designs, const CovModel& model,
                              const Eigen::VectorXd& theta, Method method, bool want_gradient) {
  if (designs.empty()) throw DataError("no subjects with observations in scope");
  const CovarianceAtTheta cov = model.expand(theta);
  const Eigen::Index p = designs.front().X.cols();

  double logdet = 0.0;
  double yVy = 0.0;
  long n_total = 0;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  std::vector<SpdFactor> factors;
  factors.reserve(designs.size());

  for (const auto& d : designs) {
    if (d.X.cols() != p) throw DimensionError("designs disagree on fixed-effect columns");
    const Eigen::MatrixXd V = model.marginal_cov(cov, d);
    try {
      factors.emplace_back(V);
    } catch (const NearSingularError& e) {
      throw NearSingularError(std::string(e.what()) + " (subject " + d.subject_id + ")",
                              d.subject_id);
    }
    const SpdFactor& f = factors.back();
    logdet += f.log_det();
    n_total += d.rows();
    const Eigen::MatrixXd VinvX = f.solve(d.X);
    const Eigen::VectorXd Vinvy = f.solve(d.y);
    A.noalias() += d.X.transpose() * VinvX;
    b.noalias() += d.X.transpose() * Vinvy;
    yVy += d.y.dot(Vinvy);
  }

  Eigen::LDLT<Eigen::MatrixXd> a_ldlt(A);
  if (a_ldlt.info() != Eigen::Success || a_ldlt.vectorD().minCoeff() <= 0.0) {
    throw NearSingularError("fixed-effect normal equations are numerically singular");
  }

  EvalOutput out;
  out.lik.beta = a_ldlt.solve(b);
  out.lik.beta_cov = a_ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  const double quad =
      yVy - 2.0 * b.dot(out.lik.beta) + out.lik.beta.dot(A * out.lik.beta);

  double nll = 0.5 * (logdet + quad);
  if (method == Method::ML) {
    nll += 0.5 * static_cast<double>(n_total) * kLog2Pi;
  } else {
    nll += 0.5 * static_cast<double>(n_total - p) * kLog2Pi +
           0.5 * a_ldlt.vectorD().array().log().sum();
  }
  out.lik.negloglik = nll;

  if (!want_gradient) return out;

  const int q = model.n_params();
  out.grad = Eigen::VectorXd::Zero(q);
  std::vector<Eigen::MatrixXd> reml_acc;
  if (method == Method::REML) reml_acc.assign(q, Eigen::MatrixXd::Zero(p, p));

  for (std::size_t i = 0; i < designs.size(); ++i) {
    const auto& d = designs[i];
    const SpdFactor& f = factors[i];
    const int n = d.rows();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd Vinv = f.solve(eye);
    const Eigen::VectorXd resid = d.y - d.X * out.lik.beta;
    const Eigen::VectorXd u = Vinv * resid;
    Eigen::MatrixXd P;
    if (method == Method::REML) P = Vinv * d.X;
    for (int j = 0; j < q; ++j) {
      const Eigen::MatrixXd dV = model.marginal_cov_derivative(cov, d, j);
      out.grad[j] += 0.5 * ((Vinv.array() * dV.array()).sum() - u.dot(dV * u));
      if (method == Method::REML) reml_acc[j].noalias() += P.transpose() * dV * P;
    }
  }
  if (method == Method::REML) {
    // d/dtheta of 0.5*log|sum X'V^-1 X|
    for (int j = 0; j < q; ++j) out.grad[j] -= 0.5 * (out.lik.beta_cov * reml_acc[j]).trace();
  }
  return out;
}

}  // namespace

LikelihoodEval profiled_negloglik(const std::vector<SubjectDesign>& designs, const CovModel& model,
                                  const Eigen::VectorXd& theta, Method method) {
  return evaluate_objective(designs, model, theta, method, false).lik;
}

Eigen::VectorXd objective_gradient(const std::vector<SubjectDesign>& designs,
                                   const CovModel& model, const Eigen::VectorXd& theta,
                                   Method method) {
  return evaluate_objective(designs, model, theta, method, true).grad;
}

// --- starting values ------------------------------------------------------------

Eigen::VectorXd default_start(const std::vector<SubjectDesign>& designs, const CovModel& model) {
  if (designs.empty()) throw DataError("no subjects with observations in scope");
  const auto& markers = model.active_markers();
  const int s = static_cast<int>(markers.size());
  const ModelSpec& spec = model.spec();

  // Per-marker OLS residual variance.
  std::vector<double> share(s, 1.0);
  const Eigen::Index p = designs.front().X.cols();
  for (int k = 0; k < s; ++k) {
    long nk = 0;
    for (const auto& d : designs) {
      for (Marker m : d.marker_of_row) nk += (m == markers[k]) ? 1 : 0;
    }
    if (nk == 0) continue;
    Eigen::MatrixXd Xk(nk, p);
    Eigen::VectorXd yk(nk);
    long row = 0;
    for (const auto& d : designs) {
      for (int i = 0; i < d.rows(); ++i) {
        if (d.marker_of_row[i] != markers[k]) continue;
        Xk.row(row) = d.X.row(i);
        yk[row] = d.y[i];
        ++row;
      }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xk);
    const Eigen::VectorXd bk = qr.solve(yk);
    const double ssr = (yk - Xk * bk).squaredNorm();
    const long dof = nk - qr.rank();
    double v;
    if (dof > 0) {
      v = ssr / static_cast<double>(dof);
    } else {
      const double mean = yk.mean();
      v = nk > 1 ? (yk.array() - mean).square().sum() / static_cast<double>(nk - 1) : 1.0;
    }
    share[k] = std::max(v, 1e-8);
  }

  const bool has_serial = residual_has_serial(spec.residual);
  const bool has_error = residual_has_error(spec.residual);
  int n_comp = (has_error ? 1 : 0) + (has_serial ? 1 : 0) +
               (spec.random_effects == RandomEffects::Slopes ? 1 : 0);

  CovarianceAtTheta nat;
  if (spec.random_effects == RandomEffects::Slopes) {
    std::vector<int> col_marker;
    for (int k = 0; k < s; ++k) {
      const int cols = spec.design.columns_per_marker(markers[k]);
      col_marker.insert(col_marker.end(), cols, k);
    }
    const int g_dim = static_cast<int>(col_marker.size());
    nat.G = Eigen::MatrixXd::Zero(g_dim, g_dim);
    for (int c = 0; c < g_dim; ++c) nat.G(c, c) = 0.1 * share[col_marker[c]];
  }
  if (has_serial) {
    nat.serial.C = Eigen::MatrixXd::Zero(s, s);
    for (int k = 0; k < s; ++k) nat.serial.C(k, k) = 0.1 * share[k];
    nat.serial.rho = 0.1;
  }
  if (has_error) {
    nat.error_var.resize(s);
    for (int k = 0; k < s; ++k) nat.error_var[k] = std::max(share[k] / n_comp, 1e-10);
  }
  return model.pack(nat);
}

// --- fitting ---------------------------------------------------------------------

namespace {

void check_design_rank(const std::vector<SubjectDesign>& designs,
                       const std::vector<std::string>& beta_names) {
  const Eigen::Index p = designs.front().X.cols();
  long n_total = 0;
  for (const auto& d : designs) n_total += d.rows();
  Eigen::MatrixXd stacked(n_total, p);
  long row = 0;
  for (const auto& d : designs) {
    stacked.middleRows(row, d.rows()) = d.X;
    row += d.rows();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(stacked);
  if (qr.rank() < p) {
    const auto& perm = qr.colsPermutation().indices();
    std::ostringstream os;
    os << "design matrix is rank deficient; dependent columns:";
    for (Eigen::Index i = qr.rank(); i < p; ++i) os << ' ' << beta_names[perm[i]];
    throw RankDeficiencyError(os.str());
  }
}

// Returns false when the observed information is not positive definite.
bool compute_standard_errors(FitResult& res, const std::vector<SubjectDesign>& designs,
                             const CovModel& model) {
  const int q = model.n_params();
  const Eigen::VectorXd& theta = res.theta;
  Eigen::MatrixXd hess(q, q);
  for (int j = 0; j < q; ++j) {
    const double h = 1e-5 * (1.0 + std::fabs(theta[j]));
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    const Eigen::VectorXd gp = objective_gradient(designs, model, tp, res.spec.method);
    const Eigen::VectorXd gm = objective_gradient(designs, model, tm, res.spec.method);
    hess.col(j) = (gp - gm) / (2.0 * h);
  }
  hess = 0.5 * (hess + hess.transpose()).eval();

  Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
    res.warnings.push_back(
        "observed information matrix is not positive definite; covariance-parameter standard "
        "errors are unavailable");
    return false;
  }
  const Eigen::MatrixXd cov_theta = ldlt.solve(Eigen::MatrixXd::Identity(q, q));

  // Delta method through the unconstrained -> natural map.
  Eigen::MatrixXd jac(q, q);
  for (int j = 0; j < q; ++j) {
    const double h = 1e-6 * (1.0 + std::fabs(theta[j]));
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    jac.col(j) = (model.natural(tp) - model.natural(tm)) / (2.0 * h);
  }
  const Eigen::MatrixXd cov_nat = jac * cov_theta * jac.transpose();
  for (int i = 0; i < q; ++i) {
    res.cov_params[i].se = std::sqrt(std::max(cov_nat(i, i), 0.0));
  }

  // 95% Wald intervals on the unconstrained scale, back-transformed: log scale
  // for variances, atanh for the serial correlation, untransformed for
  // covariances (already unconstrained).
  const double z = norm_quantile(0.975);
  const auto info = model.natural_info();
  for (int i = 0; i < q; ++i) {
    auto& par = res.cov_params[i];
    if (!std::isfinite(par.se)) continue;
    const double v = par.value;
    switch (info[i].kind) {
      case CovModel::NaturalKind::Variance: {
        if (!(v > 0.0)) break;
        const double half = z * par.se / v;
        par.ci_lo = v * std::exp(-half);
        par.ci_hi = v * std::exp(half);
        break;
      }
      case CovModel::NaturalKind::Correlation: {
        if (!(std::fabs(v) < 1.0)) break;
        const double half = z * par.se / (1.0 - v * v);
        const double t = std::atanh(v);
        par.ci_lo = std::tanh(t - half);
        par.ci_hi = std::tanh(t + half);
        break;
      }
      case CovModel::NaturalKind::Covariance:
        par.ci_lo = v - z * par.se;
        par.ci_hi = v + z * par.se;
        break;
    }
  }
  return true;
}

void flag_boundaries(FitResult& res, const std::vector<SubjectDesign>& designs,
                     const CovModel& model) {
  const auto& markers = model.active_markers();
  const int s = static_cast<int>(markers.size());

  // Per-marker response variance sets the scale for "numerically zero".
  std::vector<double> resp_var(s, 0.0);
  for (int k = 0; k < s; ++k) {
    double sum = 0.0, sum2 = 0.0;
    long n = 0;
    for (const auto& d : designs) {
      for (int i = 0; i < d.rows(); ++i) {
        if (d.marker_of_row[i] != markers[k]) continue;
        sum += d.y[i];
        sum2 += d.y[i] * d.y[i];
        ++n;
      }
    }
    if (n > 1) resp_var[k] = std::max((sum2 - sum * sum / n) / (n - 1), 0.0);
  }

  const auto info = model.natural_info();
  for (std::size_t i = 0; i < res.cov_params.size(); ++i) {
    auto& par = res.cov_params[i];
    if (info[i].kind == CovModel::NaturalKind::Variance && info[i].marker >= 0) {
      if (par.value < 1e-8 * resp_var[info[i].marker]) {
        par.at_boundary = true;
        res.warnings.push_back("variance component '" + par.name +
                               "' is estimated at the zero boundary");
      }
    } else if (info[i].kind == CovModel::NaturalKind::Correlation) {
      if (std::fabs(par.value) > 0.999) {
        par.at_boundary = true;
        res.warnings.push_back("serial correlation '" + par.name +
                               "' is estimated at the boundary");
      } else if (std::fabs(par.value) < 0.05 && residual_has_error(res.spec.residual)) {
        res.warnings.push_back(
            "serial correlation '" + par.name +
            "' is near zero; the serial variance and the measurement-error variance are weakly "
            "identified");
      }
    }
  }
}

}  // namespace

FitResult fit_designs(const std::vector<SubjectDesign>& designs, const ModelSpec& spec,
                      const FitOptions& options) {
  if (designs.empty()) throw DataError("no subjects with observations in scope");
  CovModel model(spec);
  const auto beta_names = fixed_effect_names(spec.design, spec.scope);
  const Eigen::Index p = designs.front().X.cols();
  if (p != static_cast<Eigen::Index>(beta_names.size())) {
    throw DimensionError("design columns do not match the model's fixed effects");
  }
  check_design_rank(designs, beta_names);

  Eigen::VectorXd theta0;
  if (options.theta0) {
    if (options.theta0->size() != model.n_params()) {
      throw ConfigError("starting point has wrong length for this model");
    }
    theta0 = *options.theta0;
  } else {
    theta0 = default_start(designs, model);
  }

  const ObjectiveFn objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    EvalOutput e = evaluate_objective(designs, model, x, spec.method, grad != nullptr);
    if (grad) *grad = std::move(e.grad);
    return e.lik.negloglik;
  };
  const OptimResult opt = minimize_bfgs(objective, theta0, options.optim);
  if (!std::isfinite(opt.value)) {
    throw EvaluationError("likelihood could not be evaluated at the starting point: " + opt.message,
                          std::string());
  }

  const EvalOutput fin = evaluate_objective(designs, model, opt.x, spec.method, false);

  FitResult res;
  res.spec = spec;
  res.converged = opt.converged;
  res.iterations = opt.iterations;
  res.evaluations = opt.evaluations;
  res.gradient_norm = opt.gradient.norm();
  res.message = opt.message;
  res.loglik = -opt.value;
  res.deviance = 2.0 * opt.value;
  res.n_fixed = static_cast<int>(p);
  res.n_cov_params = model.n_params();
  res.parameter_count = res.n_fixed + res.n_cov_params;
  res.aic = res.deviance + 2.0 * res.parameter_count;
  res.n_subjects = static_cast<int>(designs.size());
  long n_total = 0;
  for (const auto& d : designs) n_total += d.rows();
  res.n_observations = static_cast<int>(n_total);
  res.beta_names = beta_names;
  res.beta = fin.lik.beta;
  res.beta_cov = fin.lik.beta_cov;
  res.theta = opt.x;

  const CovarianceAtTheta cov = model.expand(opt.x);
  res.G = cov.G;
  res.serial = cov.serial;
  res.error_var = cov.error_var;

  const auto names = model.param_names();
  const Eigen::VectorXd nat = model.natural(opt.x);
  res.cov_params.resize(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    res.cov_params[i].name = names[i];
    res.cov_params[i].value = nat[static_cast<Eigen::Index>(i)];
    res.cov_params[i].se = kNaN;
  }

  if (!res.converged) {
    res.warnings.push_back("optimizer did not converge: " + opt.message);
  }
  if (options.compute_se) {
    const bool info_pd = compute_standard_errors(res, designs, model);
    // A stationary point with an indefinite observed information is not a
    // verified minimum, so convergence is withdrawn.
    if (!info_pd && res.converged) {
      res.converged = false;
      res.message = "observed information is not positive definite at the stationary point";
      res.warnings.push_back("optimizer met its tolerances but the curvature check failed; "
                             "the fit is reported as non-converged");
    }
  }
  flag_boundaries(res, designs, model);
  return res;
}

namespace {

FitResult combine_pair(FitResult f1, FitResult f2, const ModelSpec& spec, int n_subjects) {
  FitResult out;
  out.spec = spec;
  out.converged = f1.converged && f2.converged;
  out.iterations = std::max(f1.iterations, f2.iterations);
  out.evaluations = f1.evaluations + f2.evaluations;
  out.gradient_norm = std::max(f1.gradient_norm, f2.gradient_norm);
  out.message = out.converged ? "converged"
                              : "a univariate part did not converge: " +
                                    (f1.converged ? f2.message : f1.message);
  out.loglik = f1.loglik + f2.loglik;
  out.deviance = -2.0 * out.loglik;
  out.n_fixed = f1.n_fixed + f2.n_fixed;
  out.n_cov_params = f1.n_cov_params + f2.n_cov_params;
  out.parameter_count = out.n_fixed + out.n_cov_params;
  out.aic = out.deviance + 2.0 * out.parameter_count;
  out.n_subjects = n_subjects;
  out.n_observations = f1.n_observations + f2.n_observations;

  out.beta_names = f1.beta_names;
  out.beta_names.insert(out.beta_names.end(), f2.beta_names.begin(), f2.beta_names.end());
  out.beta.resize(f1.beta.size() + f2.beta.size());
  out.beta << f1.beta, f2.beta;
  out.beta_cov = Eigen::MatrixXd::Zero(out.beta.size(), out.beta.size());
  out.beta_cov.topLeftCorner(f1.beta.size(), f1.beta.size()) = f1.beta_cov;
  out.beta_cov.bottomRightCorner(f2.beta.size(), f2.beta.size()) = f2.beta_cov;

  out.cov_params = f1.cov_params;
  out.cov_params.insert(out.cov_params.end(), f2.cov_params.begin(), f2.cov_params.end());
  out.theta.resize(f1.theta.size() + f2.theta.size());
  out.theta << f1.theta, f2.theta;

  if (f1.G.size() > 0 || f2.G.size() > 0) {
    const Eigen::Index g1 = f1.G.rows(), g2 = f2.G.rows();
    out.G = Eigen::MatrixXd::Zero(g1 + g2, g1 + g2);
    if (g1 > 0) out.G.topLeftCorner(g1, g1) = f1.G;
    if (g2 > 0) out.G.bottomRightCorner(g2, g2) = f2.G;
  }
  out.serial.C = Eigen::MatrixXd::Zero(2, 2);
  out.serial.C(0, 0) = f1.serial.C(0, 0);
  out.serial.C(1, 1) = f2.serial.C(0, 0);
  out.serial.rho = kNaN;  // per-marker values live in cov_params and parts
  if (!f1.error_var.empty() && !f2.error_var.empty()) {
    out.error_var = {f1.error_var[0], f2.error_var[0]};
  }

  out.warnings = f1.warnings;
  out.warnings.insert(out.warnings.end(), f2.warnings.begin(), f2.warnings.end());
  out.parts.push_back(std::move(f1));
  out.parts.push_back(std::move(f2));
  return out;
}

}  // namespace

FitResult fit_model(const StackedDataset& data, const ModelSpec& spec, const FitOptions& options) {
  if (!needs_pair_fit(spec)) {
    const auto designs = build_design(data, spec.design, spec.scope);
    return fit_designs(designs, spec, options);
  }

  ModelSpec s1 = spec;
  s1.scope = Scope::M1Only;
  s1.independent_markers = false;
  ModelSpec s2 = spec;
  s2.scope = Scope::M2Only;
  s2.independent_markers = false;

  FitOptions o1 = options, o2 = options;
  o1.theta0.reset();
  o2.theta0.reset();
  if (options.theta0) {
    // Combined layout is the two per-marker layouts concatenated.
    const int q1 = covariance_parameter_count(s1);
    const int q2 = covariance_parameter_count(s2);
    if (options.theta0->size() != q1 + q2) {
      throw ConfigError("starting point has wrong length for this model");
    }
    o1.theta0 = options.theta0->head(q1).eval();
    o2.theta0 = options.theta0->tail(q2).eval();
  }

  FitResult f1 = fit_model(data, s1, o1);
  FitResult f2 = fit_model(data, s2, o2);
  return combine_pair(std::move(f1), std::move(f2), spec, static_cast<int>(data.subjects.size()));
}

}  // namespace bivlmm
