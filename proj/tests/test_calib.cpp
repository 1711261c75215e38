#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "netcal/calib.hpp"
#include "netcal/gp.hpp"
#include "netcal/kernels.hpp"

using namespace netcal;

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

double eq1d(double a, double b, double variance, double lengthscale) {
  const double d = (a - b) / lengthscale;
  return variance * std::exp(-0.5 * d * d);
}

// Independent recomputation of the joint density using explicit inverses
// and determinants only.
double log_joint_oracle(const Dataset& data, const SparseWeightPrior& prior,
                        const LatentState& state,
                        const KernelParams& field_kernel, double noise_var,
                        double m0) {
  const Eigen::Index n = data.size();

  VectorXd w = VectorXd::Ones(n);
  double log_prior = 0.0;
  for (int s = 0; s < data.n_sensors; ++s) {
    const VectorXd& ts = prior.virtual_times[static_cast<std::size_t>(s)];
    if (ts.size() == 0) continue;
    const VectorXd& z = state.z[static_cast<std::size_t>(s)];
    MatrixXd Kss(ts.size(), ts.size());
    for (Eigen::Index i = 0; i < ts.size(); ++i)
      for (Eigen::Index j = 0; j < ts.size(); ++j)
        Kss(i, j) = eq1d(ts[i], ts[j], prior.time_kernel.variance,
                         prior.time_kernel.lengthscales[0]);
    Kss.diagonal().array() += prior.effective_jitter();
    const MatrixXd Kss_inv = Kss.inverse();
    const VectorXd u = (z.array() - prior.mean).matrix();
    log_prior += -0.5 * u.dot(Kss_inv * u) -
                 0.5 * std::log(Kss.determinant()) -
                 0.5 * static_cast<double>(ts.size()) * kLogTwoPi;

    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& obs = data.observations[static_cast<std::size_t>(i)];
      if (obs.sensor != s) continue;
      VectorXd k(ts.size());
      for (Eigen::Index j = 0; j < ts.size(); ++j)
        k[j] = eq1d(obs.where.t, ts[j], prior.time_kernel.variance,
                    prior.time_kernel.lengthscales[0]);
      w[i] = prior.mean + k.dot(Kss_inv * u);
    }
  }

  MatrixXd C(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& a = data.observations[static_cast<std::size_t>(i)].where;
      const auto& b = data.observations[static_cast<std::size_t>(j)].where;
      double d2 = 0.0;
      d2 += std::pow((a.x - b.x) / field_kernel.lengthscales[0], 2);
      d2 += std::pow((a.y - b.y) / field_kernel.lengthscales[1], 2);
      d2 += std::pow((a.t - b.t) / field_kernel.lengthscales[2], 2);
      C(i, j) =
          w[i] * w[j] * field_kernel.variance * std::exp(-0.5 * d2);
    }
  }
  C.diagonal().array() += noise_var;
  const VectorXd r = data.values() - m0 * w;
  return -0.5 * r.dot(C.inverse() * r) - 0.5 * std::log(C.determinant()) -
         0.5 * static_cast<double>(n) * kLogTwoPi + log_prior;
}

Dataset small_dataset(int n_sensors, int n_times, std::uint64_t seed,
                      bool all_reference = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset data;
  data.n_sensors = n_sensors;
  data.reference_sensors.insert(0);
  if (all_reference)
    for (int s = 1; s < n_sensors; ++s) data.reference_sensors.insert(s);
  for (int s = 0; s < n_sensors; ++s) {
    for (int k = 0; k < n_times; ++k) {
      const double t = 0.7 * k;
      data.observations.push_back(
          {s, {0.4 * s + 0.1 * g(rng), 0.2 * g(rng), t}, g(rng)});
    }
  }
  return data;
}

KernelParams field_kernel_3d(double variance) {
  return {variance, Eigen::Vector3d(1.0, 1.0, 1.2)};
}

}  // namespace

TEST_CASE("sparse weights interpolate the pseudo-observations") {
  SparseWeightPrior prior;
  prior.time_kernel = KernelParams{4.0, VectorXd::Constant(1, 1.5)};
  prior.mean = 1.0;
  prior.jitter = 1e-12;
  prior.virtual_times = {VectorXd(), VectorXd::LinSpaced(4, 0.0, 3.0)};

  LatentState state;
  state.z.resize(2);
  state.z[1] = (VectorXd(4) << 1.5, 2.0, 0.5, 1.0).finished();

  SUBCASE("at the virtual times the weights equal z") {
    const VectorXd w = weight_at(state, prior, 1, prior.virtual_times[1]);
    CHECK((w - state.z[1]).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("a latent state at the prior mean yields the prior mean weight") {
    state.z[1].setConstant(prior.mean);
    const VectorXd times = VectorXd::LinSpaced(7, -2.0, 5.0);
    const VectorXd w = weight_at(state, prior, 1, times);
    CHECK((w.array() - prior.mean).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("far from every virtual time the weight reverts to the mean") {
    const VectorXd w =
        weight_at(state, prior, 1, VectorXd::Constant(1, 3.0 + 12.0));
    CHECK(std::abs(w[0] - prior.mean) < 1e-3);
  }
  SUBCASE("sensors without virtual times are pinned to one") {
    const VectorXd w = weight_at(state, prior, 0, VectorXd::Zero(3));
    CHECK((w.array() == 1.0).all());
  }
  SUBCASE("weight_at is linear in z for a zero-mean prior") {
    prior.mean = 0.0;
    LatentState a, b;
    a.z.resize(2);
    b.z.resize(2);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    a.z[1] = VectorXd::NullaryExpr(4, [&](Eigen::Index) { return g(rng); });
    b.z[1] = VectorXd::NullaryExpr(4, [&](Eigen::Index) { return g(rng); });
    LatentState mix;
    mix.z.resize(2);
    mix.z[1] = 0.3 * a.z[1] - 1.7 * b.z[1];
    const VectorXd times = VectorXd::LinSpaced(5, -1.0, 4.0);
    const VectorXd w_mix = weight_at(mix, prior, 1, times);
    const VectorXd expected = 0.3 * weight_at(a, prior, 1, times) -
                              1.7 * weight_at(b, prior, 1, times);
    CHECK((w_mix - expected).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("gaussian-prior weights are constant in time") {
  GaussianWeightPrior prior;
  LatentState state;
  state.z.resize(2);
  state.z[1] = VectorXd::Constant(1, 2.4);
  const VectorXd times = VectorXd::LinSpaced(4, 0.0, 3.0);
  CHECK((weight_at(state, prior, 1, times).array() == 2.4).all());
  CHECK((weight_at(state, prior, 0, times).array() == 1.0).all());
}

TEST_CASE("with only reference sensors the joint equals the plain GP "
          "marginal likelihood") {
  const Dataset data = small_dataset(2, 4, 11, /*all_reference=*/true);
  const KernelParams field = field_kernel_3d(1.4);
  const NoiseModel noise(0.09);

  SparseWeightPrior prior;
  prior.time_kernel = KernelParams{4.0, VectorXd::Constant(1, 2.0)};
  prior.virtual_times.assign(2, VectorXd());
  const CalibrationModel model(data, prior, field, noise, 0.0);
  CHECK(model.dim() == 0);

  const double joint = model.log_joint(model.prior_mean_state());
  const double mll = log_marginal_likelihood(
      eq_kernel(data.points(), data.points(), field), data.values(), noise);
  CHECK(std::abs(joint - mll) < 1e-10);
}

TEST_CASE("single scaled observation reduces to a scalar normal") {
  Dataset data;
  data.n_sensors = 1;
  data.observations.push_back({0, {0.0, 0.0, 0.0}, 2.0});

  GaussianWeightPrior prior;
  prior.mean = 1.0;
  prior.variance = 25.0;
  const CalibrationModel model(data, prior, field_kernel_3d(1.0),
                               NoiseModel(0.0), 0.0);
  LatentState state;
  state.z.resize(1);
  state.z[0] = VectorXd::Constant(1, 2.0);

  // Field term: log N(2; 0, w^2 K) with w = 2, K = 1.
  const double expected_field = -0.5 * std::log(2.0 * std::numbers::pi * 4.0) -
                                0.5 * 4.0 / 4.0;
  const double expected_prior =
      -0.5 * std::log(2.0 * std::numbers::pi * 25.0) -
      0.5 * 1.0 / 25.0;
  CHECK(model.log_joint(state) ==
        doctest::Approx(expected_field + expected_prior).epsilon(1e-9));
}

TEST_CASE("log_joint matches the explicit-algebra oracle") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    const Dataset data = small_dataset(2, 3, 100 + rep);  // N = 6
    SparseWeightPrior prior;
    prior.time_kernel = KernelParams{2.0, VectorXd::Constant(1, 1.1)};
    prior.mean = 1.0;
    prior.virtual_times = {VectorXd(), VectorXd::LinSpaced(3, 0.0, 1.4)};

    LatentState state;
    state.z.resize(2);
    state.z[1] =
        VectorXd::NullaryExpr(3, [&](Eigen::Index) { return 1.0 + 0.8 * g(rng); });

    const KernelParams field = field_kernel_3d(1.7);
    const double noise_var = 0.04;
    const double m0 = 0.6;
    const CalibrationModel model(data, prior, field, NoiseModel(noise_var), m0);

    const double fast = model.log_joint(state);
    const double slow =
        log_joint_oracle(data, prior, state, field, noise_var, m0);
    CHECK(std::abs(fast - slow) <= 1e-8 * std::max(1.0, std::abs(slow)));
  }
}

TEST_CASE("log_joint returns -inf rather than throwing on overflow") {
  Dataset data;
  data.n_sensors = 1;
  data.observations.push_back({0, {0.0, 0.0, 0.0}, 1.0});
  GaussianWeightPrior prior;
  const CalibrationModel model(data, prior, field_kernel_3d(1.0),
                               NoiseModel(0.0), 0.0);
  LatentState state;
  state.z.resize(1);
  state.z[0] = VectorXd::Constant(1, 1e300);  // w^2 K overflows
  CHECK(model.log_joint(state) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("grad_log_joint matches central finite differences") {
  std::mt19937_64 rng(55);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int rep = 0; rep < 4; ++rep) {
    const Dataset data = small_dataset(3, 4, 500 + rep);  // N = 12, M = 3
    SparseWeightPrior prior;
    prior.time_kernel = KernelParams{3.0, VectorXd::Constant(1, 1.4)};
    prior.virtual_times = {VectorXd(), VectorXd::LinSpaced(3, 0.0, 2.1),
                           VectorXd::LinSpaced(2, 0.3, 1.9)};
    const CalibrationModel model(data, prior, field_kernel_3d(1.1),
                                 NoiseModel(0.0625), 0.4);

    VectorXd flat(model.dim());
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = 1.0 + 0.5 * g(rng);

    const VectorXd grad = model.grad_log_joint(flat);
    VectorXd fd(model.dim());
    const double step = 1e-5;
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      VectorXd hi = flat, lo = flat;
      hi[i] += step;
      lo[i] -= step;
      fd[i] = (model.log_joint(hi) - model.log_joint(lo)) / (2.0 * step);
    }
    const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-10);
    CHECK((grad - fd).cwiseAbs().maxCoeff() / scale < 1e-4);
  }
}

TEST_CASE("prior gradient vanishes at the prior mean") {
  const Dataset data = small_dataset(2, 4, 77);
  GaussianWeightPrior narrow;
  narrow.variance = 0.5;
  GaussianWeightPrior wide;
  wide.variance = 50.0;
  const KernelParams field = field_kernel_3d(1.0);
  const CalibrationModel a(data, narrow, field, NoiseModel(0.01), 0.0);
  const CalibrationModel b(data, wide, field, NoiseModel(0.01), 0.0);

  // At the shared prior mean both gradients reduce to the likelihood term.
  const VectorXd at_mean = VectorXd::Ones(a.dim());
  CHECK((a.grad_log_joint(at_mean) - b.grad_log_joint(at_mean))
            .cwiseAbs()
            .maxCoeff() < 1e-9);
}

TEST_CASE("gaussian-prior gradient matches the hand-derived scalar formula") {
  Dataset data;
  data.n_sensors = 1;
  data.observations.push_back({0, {0.0, 0.0, 0.0}, 2.6});
  GaussianWeightPrior prior;
  prior.mean = 1.0;
  prior.variance = 25.0;
  const double k = 1.8, noise_var = 0.3, m0 = 0.5;
  const CalibrationModel model(data, prior, field_kernel_3d(k),
                               NoiseModel(noise_var), m0);

  const double w = 1.9;
  VectorXd flat = VectorXd::Constant(1, w);
  const double C = w * w * k + noise_var;
  const double r = 2.6 - m0 * w;
  const double expected = m0 * r / C + r * r * w * k / (C * C) - w * k / C -
                          (w - prior.mean) / prior.variance;
  CHECK(model.grad_log_joint(flat)[0] ==
        doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("predict_field with unit weights equals plain GP conditioning") {
  const Dataset data = small_dataset(2, 4, 31, /*all_reference=*/true);
  SparseWeightPrior prior;
  prior.time_kernel = KernelParams{4.0, VectorXd::Constant(1, 2.0)};
  prior.virtual_times.assign(2, VectorXd());
  const KernelParams field = field_kernel_3d(1.4);
  const NoiseModel noise(0.04);
  const CalibrationModel model(data, prior, field, noise, 0.0);

  MatrixXd query(2, 3);
  query << 0.1, 0.0, 0.9, 1.2, -0.3, 2.2;
  const GpPosterior a =
      model.predict_field(model.prior_mean_state(), query);
  const GpPosterior b = gp_posterior(
      eq_kernel(data.points(), data.points(), field),
      eq_kernel(data.points(), query, field), eq_kernel(query, query, field),
      data.values(), noise);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((a.cov - b.cov).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("a known bias is divided out of the field posterior") {
  Dataset data;
  data.n_sensors = 1;
  data.observations.push_back({0, {0.0, 0.0, 0.0}, 6.0});
  GaussianWeightPrior prior;
  const CalibrationModel model(data, prior, field_kernel_3d(1.0),
                               NoiseModel(1e-10), 0.0);
  LatentState state;
  state.z.resize(1);
  state.z[0] = VectorXd::Constant(1, 3.0);
  MatrixXd query(1, 3);
  query << 0.0, 0.0, 0.0;
  const GpPosterior post = model.predict_field(state, query);
  CHECK(post.mean[0] == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("predict_field matches an explicit-inverse oracle") {
  const Dataset data = small_dataset(2, 3, 200);
  SparseWeightPrior prior;
  prior.time_kernel = KernelParams{2.0, VectorXd::Constant(1, 1.1)};
  prior.virtual_times = {VectorXd(), VectorXd::LinSpaced(3, 0.0, 1.4)};
  const KernelParams field = field_kernel_3d(1.7);
  const double noise_var = 0.04;
  const CalibrationModel model(data, prior, field, NoiseModel(noise_var), 0.0);

  LatentState state;
  state.z.resize(2);
  state.z[1] = (VectorXd(3) << 1.6, 0.7, 1.2).finished();

  MatrixXd query(2, 3);
  query << 0.2, 0.1, 0.5, 1.0, 0.0, 1.8;
  const GpPosterior post = model.predict_field(state, query);

  const VectorXd w = model.observation_weights(state);
  const MatrixXd K = eq_kernel(data.points(), data.points(), field);
  MatrixXd C = w.asDiagonal() * K * w.asDiagonal();
  C.diagonal().array() += noise_var;
  const MatrixXd Cinv = C.inverse();
  const MatrixXd K_oq = eq_kernel(data.points(), query, field);
  const MatrixXd B = w.asDiagonal() * K_oq;
  const VectorXd mean = B.transpose() * Cinv * data.values();
  const MatrixXd cov =
      eq_kernel(query, query, field) - B.transpose() * Cinv * B;
  CHECK((post.mean - mean).cwiseAbs().maxCoeff() <=
        1e-8 * std::max(1.0, mean.cwiseAbs().maxCoeff()));
  CHECK((post.cov - cov).cwiseAbs().maxCoeff() <=
        1e-8 * std::max(1.0, cov.cwiseAbs().maxCoeff()));
}

TEST_CASE("observing the field shrinks its posterior variance") {
  Dataset data;
  data.n_sensors = 1;
  data.reference_sensors = {0};
  data.observations.push_back({0, {0.0, 0.0, 0.0}, 0.7});
  SparseWeightPrior prior;
  prior.time_kernel = KernelParams{4.0, VectorXd::Constant(1, 2.0)};
  prior.virtual_times.assign(1, VectorXd());
  const KernelParams field = field_kernel_3d(2.0);
  const CalibrationModel model(data, prior, field, NoiseModel(0.01), 0.0);
  MatrixXd query(1, 3);
  query << 0.0, 0.0, 0.0;
  const GpPosterior post =
      model.predict_field(model.prior_mean_state(), query);
  CHECK(post.cov(0, 0) < field.variance);
}

TEST_CASE("posterior_summary computes pointwise medians and bands") {
  SUBCASE("identical samples give a zero-width band") {
    hmc::Chain chain;
    chain.samples = MatrixXd::Constant(12, 2, 1.5);
    chain.log_densities = VectorXd::Zero(12);
    const SummaryBand band = posterior_summary(
        {chain}, [](const VectorXd& v) { return v; });
    CHECK(band.median[0] == 1.5);
    CHECK(band.se[0] == 0.0);
    CHECK(band.q025[1] == 1.5);
    CHECK(band.q975[1] == 1.5);
  }
  SUBCASE("the median of repeated {1,2,3} is 2") {
    hmc::Chain chain;
    chain.samples.resize(12, 1);
    for (int i = 0; i < 12; ++i) chain.samples(i, 0) = 1.0 + i % 3;
    chain.log_densities = VectorXd::Zero(12);
    const SummaryBand band = posterior_summary(
        {chain}, [](const VectorXd& v) { return v; });
    CHECK(band.median[0] == doctest::Approx(2.0));
  }
  SUBCASE("seeded unit-normal samples have a median near zero") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    hmc::Chain chain;
    chain.samples.resize(1000, 1);
    for (int i = 0; i < 1000; ++i) chain.samples(i, 0) = g(rng);
    chain.log_densities = VectorXd::Zero(1000);
    const SummaryBand band = posterior_summary(
        {chain}, [](const VectorXd& v) { return v; });
    CHECK(std::abs(band.median[0]) < 0.1);
    CHECK(band.se[0] == doctest::Approx(1.0).epsilon(0.15));
  }
  SUBCASE("degenerate inputs are rejected") {
    CHECK_THROWS_AS(
        posterior_summary({}, [](const VectorXd& v) { return v; }),
        std::invalid_argument);
    hmc::Chain empty;
    empty.samples.resize(0, 1);
    CHECK_THROWS_AS(
        posterior_summary({empty}, [](const VectorXd& v) { return v; }),
        std::invalid_argument);
    hmc::Chain tiny;
    tiny.samples = MatrixXd::Zero(3, 1);
    tiny.log_densities = VectorXd::Zero(3);
    CHECK_THROWS_AS(
        posterior_summary({tiny}, [](const VectorXd& v) { return v; }),
        std::invalid_argument);
  }
}

TEST_CASE("consistently rescaling data and field leaves the calibration "
          "unchanged") {
  // Two co-located sensors, the second reading 2x the first.
  Dataset data;
  data.n_sensors = 2;
  data.reference_sensors = {0};
  std::mt19937_64 rng(40);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const double t = 0.5 * k;
    const double f = 0.4 + std::sin(t);
    data.observations.push_back({0, {0.0, 0.0, t}, f + 0.02 * g(rng)});
    data.observations.push_back({1, {0.0, 0.0, t}, 2.0 * f + 0.02 * g(rng)});
  }

  const double c = 7.0;
  Dataset scaled = data;
  for (auto& obs : scaled.observations) obs.value *= c;

  GaussianWeightPrior prior;
  prior.mean = 1.0;
  prior.variance = 25.0;
  const double m0 = 0.4, noise_var = 0.02 * 0.02;
  const CalibrationModel base(data, prior, field_kernel_3d(1.0),
                              NoiseModel(noise_var), m0);
  const CalibrationModel rescaled(scaled, prior, field_kernel_3d(c * c),
                                  NoiseModel(c * c * noise_var), c * m0);

  // The joint densities differ by a z-independent constant, so gradients
  // agree exactly and seeded chains shift by at most Monte-Carlo noise.
  VectorXd z = VectorXd::Constant(1, 1.7);
  CHECK((base.grad_log_joint(z) - rescaled.grad_log_joint(z))
            .cwiseAbs()
            .maxCoeff() < 1e-8);

  hmc::Config cfg;
  cfg.step_size = 0.02;
  cfg.n_leapfrog = 15;
  cfg.n_samples = 2000;
  cfg.n_burnin = 300;
  cfg.adapt_step_size = true;

  cfg.seed = 101;
  const auto chains_a = hmc::run_chains(base.log_density_callable(),
                                        base.gradient_callable(),
                                        map_estimate(base), cfg, 2, 0.05);
  cfg.seed = 707;  // different stream: the check is distributional
  const auto chains_b = hmc::run_chains(rescaled.log_density_callable(),
                                        rescaled.gradient_callable(),
                                        map_estimate(rescaled), cfg, 2, 0.05);

  const auto identity = [](const VectorXd& v) { return v; };
  const SummaryBand a = posterior_summary(chains_a, identity);
  const SummaryBand b = posterior_summary(chains_b, identity);

  // Monte-Carlo standard error of the pooled median, estimated from batch
  // medians so chain autocorrelation is accounted for.
  const auto se_of_median = [](const std::vector<hmc::Chain>& chains) {
    std::vector<double> batch_medians;
    for (const auto& chain : chains) {
      const Eigen::Index batch = chain.n_samples() / 8;
      for (int b = 0; b < 8; ++b)
        batch_medians.push_back(
            quantile(chain.samples.col(0).segment(b * batch, batch), 0.5));
    }
    const auto n = static_cast<Eigen::Index>(batch_medians.size());
    const Eigen::Map<const VectorXd> m(batch_medians.data(), n);
    const double sd = std::sqrt((m.array() - m.mean()).square().sum() /
                                static_cast<double>(n - 1));
    return sd / std::sqrt(static_cast<double>(n));
  };
  const double se_med_a = se_of_median(chains_a);
  const double se_med_b = se_of_median(chains_b);
  const double tol = 2.0 * std::sqrt(se_med_a * se_med_a + se_med_b * se_med_b);
  CHECK(std::abs(a.median[0] - b.median[0]) < tol);
}
