#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "netcal/types.hpp"

namespace netcal {

/// Cholesky factor plus the diagonal jitter that made it succeed.
struct JitteredLlt {
  Eigen::LLT<MatrixXd> llt;
  double jitter = 0.0;

  double log_det() const {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }
};

/// Factors A + jitter*I, escalating the jitter by 10x on failure
/// (at most 3 retries). `base_jitter` = 0 attempts a bare factorization
/// first and falls back to an escalation floor scaled to A's diagonal.
/// Throws NumericalError when every attempt fails.
inline JitteredLlt jittered_llt(const MatrixXd& A, double base_jitter = 0.0) {
  const double scale = A.diagonal().cwiseAbs().mean();
  const double floor = 1e-8 * (scale > 0.0 ? scale : 1.0);

  double jitter = base_jitter;
  JitteredLlt out;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    MatrixXd Aj = A;
    if (jitter > 0.0) Aj.diagonal().array() += jitter;
    out.llt.compute(Aj);
    if (out.llt.info() == Eigen::Success &&
        out.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      out.jitter = jitter;
      return out;
    }
    jitter = (jitter > 0.0) ? 10.0 * jitter : floor;
  }
  throw NumericalError("jittered_llt: factorization failed", jitter / 10.0);
}

/// Sample-quantile with linear interpolation between order statistics.
inline double quantile(VectorXd values, double q) {
  const Eigen::Index n = values.size();
  if (n == 0) throw std::invalid_argument("quantile: empty input");
  std::sort(values.begin(), values.end());
  if (n == 1) return values[0];
  const double h = q * static_cast<double>(n - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const auto hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace netcal
