#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <set>
#include <string>

#include "netcal/linalg.hpp"
#include "netcal/optim.hpp"
#include "netcal/types.hpp"

namespace netcal {

/// log N(y; 0, K + noise*I) via Cholesky factorization.
double log_marginal_likelihood(const MatrixXd& K, const VectorXd& y,
                               const NoiseModel& noise);

/// Gaussian conditioning:
///   mean = K_cross^T (K_train + noise*I)^-1 y
///   cov  = K_test - K_cross^T (K_train + noise*I)^-1 K_cross
/// K_cross has shape |train| x |test|.
GpPosterior gp_posterior(const MatrixXd& K_train, const MatrixXd& K_cross,
                         const MatrixXd& K_test, const VectorXd& y,
                         const NoiseModel& noise);

/// Initial values for the coregionalized maximum-likelihood fit.
struct CoregFitInit {
  KernelParams kernel;  // 3-d space-time EQ kernel
  NoiseModel noise;
  CoregWeights coreg;
};

struct CoregFitResult {
  KernelParams kernel;
  NoiseModel noise;
  CoregWeights coreg;
  double log_marginal = 0.0;
  int iterations = 0;
};

struct CoregFitOptions {
  int restarts = 3;          // perturbed restarts beyond the given init
  std::uint64_t seed = 0;    // controls the restart perturbations
  int max_iterations = 200;  // per restart
  double gradient_tol = 1e-6;
  double restart_spread = 0.3;
};

/// Maximum-likelihood fit of the co-location model
/// cov = coreg_matrix(a) .* eq_kernel(points) + noise*I over a dataset.
///
/// Positive parameters (variance, lengthscales, noise variance) are
/// optimized on the log scale; coregionalization weights are optimized
/// raw. `frozen` names parameters to hold fixed: "variance", "noise",
/// "lengthscale:<d>", "a:<sensor>". The reference weight is always kept
/// frozen at 1. Deterministic for a fixed seed and init.
CoregFitResult ml_fit_coreg(const Dataset& data, const CoregFitInit& init,
                            const std::set<std::string>& frozen = {},
                            const CoregFitOptions& options = {});

/// The fit's internal objective (negative log marginal likelihood plus its
/// gradient over the flat parameter vector) and the packed start point.
/// Exposed so the analytic gradient can be checked against finite
/// differences.
struct CoregObjective {
  ValueAndGradient fn;
  VectorXd x0;
};

CoregObjective ml_fit_objective(const Dataset& data, const CoregFitInit& init,
                                const std::set<std::string>& frozen = {});

}  // namespace netcal
