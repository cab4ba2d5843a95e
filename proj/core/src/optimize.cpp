#include "bivlmm/optimize.hpp"

#include <cmath>
#include <limits>

namespace bivlmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double try_eval(const ObjectiveFn& f, const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                int& evaluations) {
  ++evaluations;
  double v;
  try {
    v = f(x, grad);
  } catch (...) {
    return kInf;
  }
  if (!std::isfinite(v)) return kInf;
  if (grad && !grad->allFinite()) return kInf;
  return v;
}

}  // namespace

OptimResult minimize_bfgs(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                          const OptimOptions& opts) {
  const Eigen::Index n = x0.size();
  OptimResult res;
  res.x = x0;
  res.gradient.resize(n);

  res.value = try_eval(f, res.x, &res.gradient, res.evaluations);
  if (!std::isfinite(res.value)) {
    res.message = "objective is not finite at the starting point";
    return res;
  }

  const auto grad_small = [&opts](double gnorm, double value) {
    return gnorm <= opts.grad_tol || gnorm <= opts.grad_rel_tol * (1.0 + std::fabs(value));
  };

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool h_is_identity = true;

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    res.iterations = iter;
    const double gnorm = res.gradient.norm();
    if (opts.on_iteration) opts.on_iteration(iter - 1, res.value, gnorm);

    Eigen::VectorXd d = -(H * res.gradient);
    double slope = d.dot(res.gradient);
    if (!(slope < 0.0)) {
      // Model went bad; restart from steepest descent.
      H.setIdentity();
      h_is_identity = true;
      d = -res.gradient;
      slope = d.dot(res.gradient);
      if (!(slope < 0.0)) {
        res.converged = grad_small(gnorm, res.value);
        res.message = res.converged ? "gradient below tolerance" : "no descent direction";
        return res;
      }
    }

    // Armijo backtracking from a unit step.
    double alpha = 1.0;
    double new_value = kInf;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < opts.max_line_search_steps; ++ls) {
      x_new = res.x + alpha * d;
      new_value = try_eval(f, x_new, nullptr, res.evaluations);
      if (new_value <= res.value + opts.armijo_c1 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.converged = grad_small(gnorm, res.value);
      res.message =
          res.converged ? "gradient below tolerance" : "line search failed to make progress";
      return res;
    }

    Eigen::VectorXd g_new(n);
    const double checked = try_eval(f, x_new, &g_new, res.evaluations);
    if (!std::isfinite(checked)) {
      res.message = "gradient evaluation failed at an accepted point";
      return res;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.gradient;
    const double obj_drop = res.value - new_value;

    res.x = std::move(x_new);
    res.value = new_value;
    res.gradient = std::move(g_new);

    if (obj_drop <= opts.rel_obj_tol * (1.0 + std::fabs(res.value)) &&
        grad_small(res.gradient.norm(), res.value)) {
      res.converged = true;
      res.message = "converged";
      if (opts.on_iteration) opts.on_iteration(iter, res.value, res.gradient.norm());
      return res;
    }

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (h_is_identity) {
        // Shanno-Phua: scale the initial inverse Hessian to the problem.
        H *= sy / y.dot(y);
        h_is_identity = false;
      }
      const Eigen::VectorXd Hy = H * y;
      const double yHy = y.dot(Hy);
      const double rho = 1.0 / sy;
      // BFGS inverse update: H += ((1 + y'Hy/s'y) s s' - H y s' - s y' H) / s'y
      H.noalias() += (rho * rho * yHy + rho) * (s * s.transpose());
      H.noalias() -= rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }

  res.message = "maximum iterations reached";
  return res;
}

}  // namespace bivlmm
