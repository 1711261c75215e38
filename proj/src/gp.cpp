#include "netcal/gp.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "netcal/kernels.hpp"
#include "netcal/optim.hpp"

namespace netcal {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

MatrixXd with_noise(const MatrixXd& K, const NoiseModel& noise) {
  noise.validate();
  MatrixXd Kn = K;
  Kn.diagonal().array() += noise.variance;
  return Kn;
}

}  // namespace

double log_marginal_likelihood(const MatrixXd& K, const VectorXd& y,
                               const NoiseModel& noise) {
  if (K.rows() != K.cols() || K.rows() != y.size())
    throw std::invalid_argument("log_marginal_likelihood: shape mismatch");
  const auto chol = jittered_llt(with_noise(K, noise));
  const VectorXd alpha = chol.llt.solve(y);
  return -0.5 * y.dot(alpha) - 0.5 * chol.log_det() -
         0.5 * static_cast<double>(y.size()) * kLogTwoPi;
}

GpPosterior gp_posterior(const MatrixXd& K_train, const MatrixXd& K_cross,
                         const MatrixXd& K_test, const VectorXd& y,
                         const NoiseModel& noise) {
  if (K_train.rows() != K_train.cols() || K_train.rows() != y.size() ||
      K_cross.rows() != K_train.rows() || K_cross.cols() != K_test.rows() ||
      K_test.rows() != K_test.cols())
    throw std::invalid_argument("gp_posterior: shape mismatch");
  const auto chol = jittered_llt(with_noise(K_train, noise));
  GpPosterior post;
  post.mean = K_cross.transpose() * chol.llt.solve(y);
  post.cov = K_test - K_cross.transpose() * chol.llt.solve(K_cross);
  return post;
}

namespace {

// Flat parameterization of the coregionalized co-location model:
// log(variance), log(lengthscale_d)..., log(noise_variance), then the
// free coregionalization weights. Frozen parameters are excluded.
struct CoregParameterization {
  int dims = 0;
  int n_sensors = 0;
  bool fit_variance = true;
  bool fit_noise = true;
  std::vector<bool> fit_lengthscale;
  std::vector<bool> fit_coreg;

  CoregParameterization(int dims_, int n_sensors_, int reference,
                        const std::set<std::string>& frozen)
      : dims(dims_), n_sensors(n_sensors_) {
    fit_variance = frozen.count("variance") == 0;
    fit_noise = frozen.count("noise") == 0;
    fit_lengthscale.assign(static_cast<std::size_t>(dims), true);
    for (int d = 0; d < dims; ++d)
      if (frozen.count("lengthscale:" + std::to_string(d)))
        fit_lengthscale[static_cast<std::size_t>(d)] = false;
    fit_coreg.assign(static_cast<std::size_t>(n_sensors), true);
    for (int m = 0; m < n_sensors; ++m)
      if (frozen.count("a:" + std::to_string(m)))
        fit_coreg[static_cast<std::size_t>(m)] = false;
    fit_coreg[static_cast<std::size_t>(reference)] = false;
  }

  Eigen::Index size() const {
    Eigen::Index n = fit_variance ? 1 : 0;
    n += fit_noise ? 1 : 0;
    for (bool f : fit_lengthscale) n += f ? 1 : 0;
    for (bool f : fit_coreg) n += f ? 1 : 0;
    return n;
  }

  VectorXd pack(const CoregFitInit& v) const {
    VectorXd x(size());
    Eigen::Index k = 0;
    if (fit_variance) x[k++] = std::log(v.kernel.variance);
    for (int d = 0; d < dims; ++d)
      if (fit_lengthscale[static_cast<std::size_t>(d)])
        x[k++] = std::log(v.kernel.lengthscales[d]);
    if (fit_noise) x[k++] = std::log(std::max(v.noise.variance, 1e-12));
    for (int m = 0; m < n_sensors; ++m)
      if (fit_coreg[static_cast<std::size_t>(m)]) x[k++] = v.coreg.a[m];
    return x;
  }

  CoregFitInit unpack(const VectorXd& x, const CoregFitInit& base) const {
    CoregFitInit v = base;
    Eigen::Index k = 0;
    if (fit_variance) v.kernel.variance = std::exp(x[k++]);
    for (int d = 0; d < dims; ++d)
      if (fit_lengthscale[static_cast<std::size_t>(d)])
        v.kernel.lengthscales[d] = std::exp(x[k++]);
    if (fit_noise) v.noise.variance = std::exp(x[k++]);
    for (int m = 0; m < n_sensors; ++m)
      if (fit_coreg[static_cast<std::size_t>(m)]) v.coreg.a[m] = x[k++];
    return v;
  }
};

// Negative log marginal likelihood of the co-location model and its
// gradient in the flat parameterization, using
// dL/dtheta = 1/2 alpha^T (dK) alpha - 1/2 tr(K^-1 dK).
double coreg_negative_lml(const CoregParameterization& par,
                          const CoregFitInit& base, const MatrixXd& points,
                          const VectorXi& sensor_of, const VectorXd& y,
                          const VectorXd& x, VectorXd& grad) {
  grad.setConstant(par.size(), std::numeric_limits<double>::quiet_NaN());
  // Reject wild line-search trials before exp() under/overflows the
  // positive parameters.
  if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 40.0)
    return std::numeric_limits<double>::infinity();

  const CoregFitInit v = par.unpack(x, base);
  const Eigen::Index n = y.size();

  const MatrixXd E = eq_kernel(points, points, v.kernel);
  VectorXd a_of(n);
  for (Eigen::Index i = 0; i < n; ++i) a_of[i] = v.coreg.a[sensor_of[i]];
  MatrixXd K = a_of.asDiagonal() * E * a_of.asDiagonal();
  K.diagonal().array() += v.noise.variance;

  JitteredLlt chol;
  try {
    chol = jittered_llt(K);
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
  const VectorXd alpha = chol.llt.solve(y);
  const MatrixXd Kinv = chol.llt.solve(MatrixXd::Identity(n, n));
  const double lml = -0.5 * y.dot(alpha) - 0.5 * chol.log_det() -
                     0.5 * static_cast<double>(n) * kLogTwoPi;

  // d(lml)/dK summarised by M = 1/2 (alpha alpha^T - K^-1); for each
  // parameter the gradient is sum(M .* dK).
  const MatrixXd M = 0.5 * (alpha * alpha.transpose() - Kinv);

  grad.resize(par.size());
  Eigen::Index k = 0;
  const MatrixXd B_E = a_of.asDiagonal() * E * a_of.asDiagonal();
  if (par.fit_variance) {
    // dK/dlog v = B .* E
    grad[k++] = -(M.cwiseProduct(B_E)).sum();
  }
  for (int d = 0; d < par.dims; ++d) {
    if (!par.fit_lengthscale[static_cast<std::size_t>(d)]) continue;
    // dK/dlog l_d = (B .* E) .* D_d with D_d(i,j) = ((x_i-x_j)/l_d)^2
    const VectorXd c = points.col(d) / v.kernel.lengthscales[d];
    MatrixXd D = c.replicate(1, n) - c.transpose().replicate(n, 1);
    D = D.cwiseProduct(D);
    grad[k++] = -(M.cwiseProduct(B_E).cwiseProduct(D)).sum();
  }
  if (par.fit_noise) {
    grad[k++] = -v.noise.variance * M.trace();
  }
  for (int m = 0; m < par.n_sensors; ++m) {
    if (!par.fit_coreg[static_cast<std::size_t>(m)]) continue;
    // dK(i,j)/da_m = (1[s_i=m] a_{s_j} + 1[s_j=m] a_{s_i}) E(i,j), which by
    // symmetry of M and E collapses to twice the row sums over i with s_i=m.
    double g = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sensor_of[i] != m) continue;
      g += 2.0 * (M.row(i).transpose().cwiseProduct(E.row(i).transpose())
                      .cwiseProduct(a_of))
                     .sum();
    }
    grad[k++] = -g;
  }
  return -lml;
}

}  // namespace

CoregObjective ml_fit_objective(const Dataset& data, const CoregFitInit& init,
                                const std::set<std::string>& frozen) {
  data.validate();
  const CoregParameterization par(3, data.n_sensors, init.coreg.reference,
                                  frozen);
  CoregObjective out;
  out.x0 = par.pack(init);
  out.fn = [par, init, points = data.points(), sensor_of = data.sensor_index(),
            y = data.values()](const VectorXd& x, VectorXd& grad) {
    return coreg_negative_lml(par, init, points, sensor_of, y, x, grad);
  };
  return out;
}

CoregFitResult ml_fit_coreg(const Dataset& data, const CoregFitInit& init,
                            const std::set<std::string>& frozen,
                            const CoregFitOptions& options) {
  data.validate();
  init.kernel.validate();
  init.noise.validate();
  init.coreg.validate();
  if (init.coreg.a.size() != data.n_sensors)
    throw std::invalid_argument("ml_fit_coreg: coreg size != n_sensors");

  const MatrixXd points = data.points();
  const VectorXi sensor_of = data.sensor_index();
  const VectorXd y = data.values();
  const CoregParameterization par(3, data.n_sensors, init.coreg.reference,
                                  frozen);

  const auto objective = [&](const VectorXd& x, VectorXd& grad) {
    return coreg_negative_lml(par, init, points, sensor_of, y, x, grad);
  };

  LbfgsOptions lbfgs;
  lbfgs.max_iterations = options.max_iterations;
  lbfgs.gradient_tol = options.gradient_tol;

  const VectorXd x0 = par.pack(init);
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> perturb(0.0, options.restart_spread);

  LbfgsResult best;
  bool have_best = false;
  int total_iterations = 0;
  for (int r = 0; r <= options.restarts; ++r) {
    VectorXd start = x0;
    if (r > 0)
      for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += perturb(rng);
    try {
      LbfgsResult res = lbfgs_minimize(objective, start, lbfgs);
      total_iterations += res.iterations;
      if (!have_best || res.f < best.f) {
        best = std::move(res);
        have_best = true;
      }
    } catch (const FitError&) {
      if (r == 0) throw;  // the caller's own init must be usable
    }
  }
  if (!have_best)
    throw FitError("ml_fit_coreg: no restart produced a finite objective", x0);

  const CoregFitInit fitted = par.unpack(best.x, init);
  CoregFitResult out;
  out.kernel = fitted.kernel;
  out.noise = fitted.noise;
  out.coreg = fitted.coreg;
  out.log_marginal = -best.f;
  out.iterations = total_iterations;
  return out;
}

}  // namespace netcal
