#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "netcal/types.hpp"

namespace netcal::hmc {

using LogDensity = std::function<double(const VectorXd&)>;
using Gradient = std::function<VectorXd(const VectorXd&)>;

struct Config {
  double step_size = 0.1;
  int n_leapfrog = 20;
  int n_samples = 1000;  // post-burn-in draws kept
  int n_burnin = 500;    // discarded draws
  std::uint64_t seed = 0;
  VectorXd mass;  // diagonal mass; empty means all ones

  // Dual-averaging step-size adaptation during burn-in. Off by default;
  // when on, the step size is frozen at the averaged value after burn-in.
  bool adapt_step_size = false;
  double target_accept = 0.8;

  void validate() const {
    if (!(step_size > 0.0)) throw std::invalid_argument("hmc: step_size <= 0");
    if (n_leapfrog < 1) throw std::invalid_argument("hmc: n_leapfrog < 1");
    if (n_samples < 1) throw std::invalid_argument("hmc: n_samples < 1");
    if (n_burnin < 0) throw std::invalid_argument("hmc: n_burnin < 0");
  }
};

/// Post-burn-in draws (one row per sample) with per-sample log densities.
struct Chain {
  MatrixXd samples;
  VectorXd log_densities;
  double accept_rate = 0.0;

  Eigen::Index n_samples() const { return samples.rows(); }
};

struct Diagnostics {
  VectorXd ess;  // per coordinate
  double accept_rate = 0.0;
};

/// Leapfrog integration of Hamiltonian dynamics for the potential
/// U(q) = -log_density(q), in place. `inv_mass` is the elementwise
/// inverse of the diagonal mass.
void leapfrog(VectorXd& q, VectorXd& p, double step_size, int n_steps,
              const Gradient& grad_log_density, const VectorXd& inv_mass);

/// Runs a single HMC chain. Proposals with a non-finite density or
/// momentum are always rejected; a non-finite density at `init` throws.
/// Bit-reproducible for a fixed seed, config and target.
Chain sample(const LogDensity& log_density, const Gradient& gradient,
             const VectorXd& init, const Config& config);

/// Runs `n_chains` independent chains from deterministically jittered
/// copies of `init` (chain c uses seed config.seed + c * 0x9E3779B9 and
/// init jittered by N(0, init_jitter^2)). Chains execute concurrently.
std::vector<Chain> run_chains(const LogDensity& log_density,
                              const Gradient& gradient, const VectorXd& init,
                              const Config& config, int n_chains,
                              double init_jitter = 0.0);

/// Effective sample size per coordinate: n / (1 + 2 sum of autocorrelations),
/// truncating the sum at the first negative consecutive pair, clamped to
/// [1, n]. A constant coordinate reports 1.
VectorXd effective_sample_size(const MatrixXd& samples);

Diagnostics diagnostics(const Chain& chain);

}  // namespace netcal::hmc
