#pragma once

#include <Eigen/Dense>

#include <functional>

#include "netcal/types.hpp"

namespace netcal {

/// Objective callback: returns f(x) and fills grad (same size as x).
using ValueAndGradient =
    std::function<double(const VectorXd& x, VectorXd& grad)>;

struct LbfgsOptions {
  int max_iterations = 200;
  int history = 8;
  double gradient_tol = 1e-6;  // on the max-norm of the gradient
  double f_tol = 1e-10;        // relative objective decrease per iteration
  double initial_step = 1.0;
  double armijo_c = 1e-4;
  int max_line_search = 40;
};

struct LbfgsResult {
  VectorXd x;
  double f = 0.0;
  VectorXd gradient;
  int iterations = 0;
  bool converged = false;
};

/// Limited-memory BFGS minimization with Armijo backtracking.
/// Non-finite trial values shrink the step; a non-finite objective at the
/// start point raises FitError carrying the last finite iterate seen.
LbfgsResult lbfgs_minimize(const ValueAndGradient& objective, VectorXd x0,
                           const LbfgsOptions& options = {});

}  // namespace netcal
