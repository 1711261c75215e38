#include "netcal/hmc.hpp"

#include <cmath>
#include <future>
#include <limits>
#include <random>

namespace netcal::hmc {

void leapfrog(VectorXd& q, VectorXd& p, double step_size, int n_steps,
              const Gradient& grad_log_density, const VectorXd& inv_mass) {
  // U = -log p, so dp/dt = -dU/dq = grad log p.
  p += 0.5 * step_size * grad_log_density(q);
  for (int s = 0; s < n_steps; ++s) {
    q += step_size * inv_mass.cwiseProduct(p);
    if (s + 1 < n_steps) p += step_size * grad_log_density(q);
  }
  p += 0.5 * step_size * grad_log_density(q);
}

namespace {

double kinetic_energy(const VectorXd& p, const VectorXd& inv_mass) {
  return 0.5 * p.dot(inv_mass.cwiseProduct(p));
}

// Nesterov dual averaging on log(step size), targeting a fixed
// acceptance probability during burn-in.
struct DualAveraging {
  double mu;
  double log_eps;
  double log_eps_avg = 0.0;
  double h_avg = 0.0;
  double target;
  int t = 0;

  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;

  DualAveraging(double eps0, double target_)
      : mu(std::log(10.0 * eps0)), log_eps(std::log(eps0)), target(target_) {}

  void update(double accept_prob) {
    ++t;
    const double td = static_cast<double>(t);
    h_avg = (1.0 - 1.0 / (td + kT0)) * h_avg +
            (target - accept_prob) / (td + kT0);
    log_eps = mu - std::sqrt(td) / kGamma * h_avg;
    const double w = std::pow(td, -kKappa);
    log_eps_avg = w * log_eps + (1.0 - w) * log_eps_avg;
  }

  // Forget the transient: keep the current step but restart the averaging.
  void restart() {
    mu = std::log(10.0 * current());
    h_avg = 0.0;
    log_eps_avg = 0.0;
    t = 0;
  }

  double current() const { return std::exp(log_eps); }
  double averaged() const { return std::exp(log_eps_avg); }
};

// Doubles or halves the step until one leapfrog trajectory's energy error
// crosses the 50% acceptance line. Keeps the search bounded.
double find_initial_step(const LogDensity& log_density, const Gradient& grad,
                         const VectorXd& q0, double log_p0, double eps0,
                         const VectorXd& inv_mass, const VectorXd& mass_sqrt,
                         std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd p0(q0.size());
  for (Eigen::Index i = 0; i < p0.size(); ++i)
    p0[i] = normal(rng) * mass_sqrt[i];
  const double h0 = -log_p0 + 0.5 * p0.dot(inv_mass.cwiseProduct(p0));

  const auto energy_drop = [&](double eps) {
    VectorXd q = q0, p = p0;
    leapfrog(q, p, eps, 1, grad, inv_mass);
    if (!q.allFinite() || !p.allFinite())
      return -std::numeric_limits<double>::infinity();
    const double lp = log_density(q);
    if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
    return h0 - (-lp + 0.5 * p.dot(inv_mass.cwiseProduct(p)));
  };

  double eps = eps0;
  double drop = energy_drop(eps);
  const double direction = drop > std::log(0.5) ? 1.0 : -1.0;
  for (int iter = 0; iter < 60; ++iter) {
    eps = direction > 0 ? 2.0 * eps : 0.5 * eps;
    drop = energy_drop(eps);
    const bool still_good = direction > 0 ? drop > std::log(0.5)
                                          : drop <= std::log(0.5);
    if (!still_good) break;
  }
  return direction > 0 ? 0.5 * eps : eps;
}

}  // namespace

Chain sample(const LogDensity& log_density, const Gradient& gradient,
             const VectorXd& init, const Config& config) {
  config.validate();
  const Eigen::Index dim = init.size();

  VectorXd mass = config.mass.size() ? config.mass : VectorXd::Ones(dim);
  if (mass.size() != dim)
    throw std::invalid_argument("hmc::sample: mass size != dimension");
  if ((mass.array() <= 0.0).any())
    throw std::invalid_argument("hmc::sample: mass entries must be positive");
  const VectorXd inv_mass = mass.cwiseInverse();
  const VectorXd mass_sqrt = mass.cwiseSqrt();

  VectorXd q = init;
  double log_p = log_density(q);
  if (!std::isfinite(log_p))
    throw std::invalid_argument(
        "hmc::sample: log density not finite at the initial point");

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Chain chain;
  chain.samples.resize(config.n_samples, dim);
  chain.log_densities.resize(config.n_samples);

  double step_size = config.step_size;
  if (config.adapt_step_size && config.n_burnin > 0)
    step_size = find_initial_step(log_density, gradient, q, log_p,
                                  config.step_size, inv_mass, mass_sqrt, rng);
  DualAveraging adapt(step_size, config.target_accept);

  const int total = config.n_burnin + config.n_samples;
  long accepted = 0;
  for (int iter = 0; iter < total; ++iter) {
    const bool burnin = iter < config.n_burnin;

    VectorXd p(dim);
    for (Eigen::Index i = 0; i < dim; ++i) p[i] = normal(rng) * mass_sqrt[i];

    VectorXd q_new = q;
    VectorXd p_new = p;
    leapfrog(q_new, p_new, step_size, config.n_leapfrog, gradient, inv_mass);

    const double h0 = -log_p + kinetic_energy(p, inv_mass);
    double accept_prob = 0.0;
    double log_p_new = -std::numeric_limits<double>::infinity();
    if (q_new.allFinite() && p_new.allFinite()) {
      log_p_new = log_density(q_new);
      if (std::isfinite(log_p_new)) {
        const double h1 = -log_p_new + kinetic_energy(p_new, inv_mass);
        accept_prob = std::min(1.0, std::exp(h0 - h1));
      }
    }
    // Draw the accept uniform unconditionally to keep the RNG stream
    // aligned whether or not the proposal was finite.
    const double u = uniform(rng);
    if (u < accept_prob) {
      q = std::move(q_new);
      log_p = log_p_new;
      if (!burnin) ++accepted;
    }

    if (burnin && config.adapt_step_size) {
      adapt.update(accept_prob);
      step_size = adapt.current();
      // The first half of burn-in also covers the approach to the typical
      // set; only the second half feeds the final averaged step.
      if (iter + 1 == config.n_burnin / 2) adapt.restart();
      if (iter + 1 == config.n_burnin) step_size = adapt.averaged();
    }

    if (!burnin) {
      const int k = iter - config.n_burnin;
      chain.samples.row(k) = q;
      chain.log_densities[k] = log_p;
    }
  }
  chain.accept_rate =
      static_cast<double>(accepted) / static_cast<double>(config.n_samples);
  return chain;
}

std::vector<Chain> run_chains(const LogDensity& log_density,
                              const Gradient& gradient, const VectorXd& init,
                              const Config& config, int n_chains,
                              double init_jitter) {
  if (n_chains < 1) throw std::invalid_argument("run_chains: n_chains < 1");

  std::vector<std::future<Chain>> futures;
  futures.reserve(static_cast<std::size_t>(n_chains));
  for (int c = 0; c < n_chains; ++c) {
    Config cfg = config;
    cfg.seed = config.seed + static_cast<std::uint64_t>(c) * 0x9E3779B9ull;
    VectorXd start = init;
    if (init_jitter > 0.0) {
      std::mt19937_64 rng(cfg.seed ^ 0xA24BAED4963EE407ull);
      std::normal_distribution<double> normal(0.0, init_jitter);
      for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += normal(rng);
    }
    futures.push_back(std::async(
        std::launch::async,
        [&log_density, &gradient, cfg, start] {
          return sample(log_density, gradient, start, cfg);
        }));
  }
  std::vector<Chain> chains;
  chains.reserve(futures.size());
  for (auto& f : futures) chains.push_back(f.get());
  return chains;
}

VectorXd effective_sample_size(const MatrixXd& samples) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index dim = samples.cols();
  VectorXd ess(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const VectorXd x = samples.col(j).array() - samples.col(j).mean();
    const double var = x.squaredNorm() / static_cast<double>(n);
    if (n < 2 || var <= 0.0) {
      ess[j] = 1.0;  // degenerate (constant) coordinate
      continue;
    }
    // Biased autocovariance estimates; truncate at the first lag pair
    // whose autocorrelations sum negative.
    double tau = 1.0;
    double rho_prev = 0.0;
    bool have_prev = false;
    for (Eigen::Index lag = 1; lag < n; ++lag) {
      const double rho =
          x.head(n - lag).dot(x.tail(n - lag)) / static_cast<double>(n) / var;
      if (have_prev) {
        if (rho_prev + rho < 0.0) {
          tau -= 2.0 * rho_prev;  // drop the half-pair already added
          break;
        }
        have_prev = false;
      } else {
        have_prev = true;
      }
      tau += 2.0 * rho;
      rho_prev = rho;
    }
    const double n_f = static_cast<double>(n);
    double e = (tau > 0.0) ? n_f / tau : n_f;
    ess[j] = std::min(std::max(e, 1.0), n_f);
  }
  return ess;
}

Diagnostics diagnostics(const Chain& chain) {
  if (chain.n_samples() < 1)
    throw std::invalid_argument("diagnostics: empty chain");
  return {effective_sample_size(chain.samples), chain.accept_rate};
}

}  // namespace netcal::hmc
