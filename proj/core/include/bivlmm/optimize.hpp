#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace bivlmm {

struct OptimOptions {
  int max_iterations = 500;
  double rel_obj_tol = 1e-10;   // relative objective change
  double grad_tol = 1e-6;       // gradient 2-norm, absolute
  // Gradient 2-norm relative to 1 + |objective|; either gradient test
  // suffices. An absolute tolerance alone is unreachable for objectives whose
  // magnitude grows with the data size.
  double grad_rel_tol = 1e-8;
  double armijo_c1 = 1e-4;
  int max_line_search_steps = 60;
  std::function<void(int iter, double value, double grad_norm)> on_iteration;
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

// Objective for minimization. When `grad` is non-null the gradient must be
// written to it. Throwing, or returning a non-finite value, makes the line
// search treat the point as infinitely bad rather than aborting.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

// BFGS (inverse-Hessian form) with Armijo backtracking. The initial inverse
// Hessian is rescaled by s'y / y'y after the first accepted step; curvature
// updates are skipped when s'y is too small to be trustworthy.
OptimResult minimize_bfgs(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                          const OptimOptions& opts = {});

}  // namespace bivlmm
