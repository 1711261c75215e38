#include "netcal/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

namespace netcal {

namespace {

bool finite(double v) { return std::isfinite(v); }

}  // namespace

LbfgsResult lbfgs_minimize(const ValueAndGradient& objective, VectorXd x0,
                           const LbfgsOptions& options) {
  const Eigen::Index n = x0.size();
  VectorXd x = std::move(x0);
  VectorXd grad(n);
  double f = objective(x, grad);
  if (!finite(f) || !grad.allFinite())
    throw FitError("lbfgs_minimize: objective not finite at start point", x);

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  LbfgsResult best{x, f, grad, 0, false};

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (grad.cwiseAbs().maxCoeff() <= options.gradient_tol) {
      best = {x, f, grad, it, true};
      return best;
    }

    // Two-loop recursion for the search direction.
    VectorXd q = grad;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const VectorXd& s = s_hist.back();
      const VectorXd& yv = y_hist.back();
      q *= s.dot(yv) / yv.squaredNorm();
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    VectorXd direction = -q;
    double dir_deriv = grad.dot(direction);
    if (!(dir_deriv < 0.0)) {  // not a descent direction; fall back
      direction = -grad;
      dir_deriv = -grad.squaredNorm();
    }

    // Armijo backtracking with quadratic interpolation; non-finite trial
    // values just shrink the step.
    double step = options.initial_step;
    VectorXd x_new(n), grad_new(n);
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < options.max_line_search; ++ls) {
      x_new = x + step * direction;
      f_new = objective(x_new, grad_new);
      if (finite(f_new) && grad_new.allFinite() &&
          f_new <= f + options.armijo_c * step * dir_deriv) {
        accepted = true;
        break;
      }
      if (finite(f_new)) {
        const double denom = 2.0 * (f_new - f - dir_deriv * step);
        double interpolated =
            denom > 0.0 ? -dir_deriv * step * step / denom : 0.5 * step;
        step = std::clamp(interpolated, 0.05 * step, 0.5 * step);
      } else {
        step *= 0.1;
      }
    }
    if (!accepted) {
      best = {x, f, grad, it, false};
      return best;  // line search stalled at the best point found so far
    }

    VectorXd s = x_new - x;
    VectorXd yv = grad_new - grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const bool stalled =
        std::abs(f - f_new) <= options.f_tol * (1.0 + std::abs(f));
    x = std::move(x_new);
    grad = std::move(grad_new);
    f = f_new;
    if (stalled) {
      best = {x, f, grad, it + 1, true};
      return best;
    }
  }
  best = {x, f, grad, it, false};
  return best;
}

}  // namespace netcal
