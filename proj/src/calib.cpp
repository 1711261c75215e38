#include "netcal/calib.hpp"

#include <cmath>
#include <limits>

#include "netcal/kernels.hpp"
#include "netcal/optim.hpp"

namespace netcal {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double prior_mean_of(const WeightPrior& prior) {
  return std::visit([](const auto& p) { return p.mean; }, prior);
}

}  // namespace

SparseWeightPrior SparseWeightPrior::for_dataset(const Dataset& data,
                                                 const KernelParams& time_kernel,
                                                 double spacing, double mean) {
  SparseWeightPrior prior;
  prior.time_kernel = time_kernel;
  prior.mean = mean;
  prior.validate();

  const double dt =
      spacing > 0.0 ? spacing : 0.5 * time_kernel.lengthscales[0];
  prior.virtual_times.assign(static_cast<std::size_t>(data.n_sensors),
                             VectorXd());
  for (int s = 0; s < data.n_sensors; ++s) {
    if (data.is_reference(s)) continue;
    double t_min = std::numeric_limits<double>::infinity();
    double t_max = -std::numeric_limits<double>::infinity();
    for (const auto& obs : data.observations) {
      if (obs.sensor != s) continue;
      t_min = std::min(t_min, obs.where.t);
      t_max = std::max(t_max, obs.where.t);
    }
    if (!(t_min <= t_max)) continue;  // no observations for this sensor
    const auto n =
        static_cast<Eigen::Index>(std::floor((t_max - t_min) / dt + 1e-9)) + 1;
    prior.virtual_times[static_cast<std::size_t>(s)] =
        VectorXd::LinSpaced(n, t_min, t_min + dt * static_cast<double>(n - 1));
  }
  return prior;
}

LatentState LatentLayout::unflatten(const VectorXd& flat) const {
  if (flat.size() != total)
    throw std::invalid_argument("LatentLayout: flat size mismatch");
  LatentState state;
  state.z.resize(offset.size());
  for (std::size_t s = 0; s < offset.size(); ++s)
    if (offset[s] >= 0)
      state.z[s] = flat.segment(offset[s], block[s]);
  return state;
}

VectorXd LatentLayout::flatten(const LatentState& state) const {
  VectorXd flat(total);
  for (std::size_t s = 0; s < offset.size(); ++s) {
    if (offset[s] < 0) continue;
    if (s >= state.z.size() || state.z[s].size() != block[s])
      throw std::invalid_argument("LatentLayout: state block mismatch");
    flat.segment(offset[s], block[s]) = state.z[s];
  }
  return flat;
}

VectorXd weight_at(const LatentState& state, const SparseWeightPrior& prior,
                   int sensor, const VectorXd& times) {
  prior.validate();
  if (sensor < 0 ||
      sensor >= static_cast<int>(prior.virtual_times.size()))
    throw std::invalid_argument("weight_at: sensor out of range");
  const VectorXd& ts = prior.virtual_times[static_cast<std::size_t>(sensor)];
  if (ts.size() == 0) return VectorXd::Ones(times.size());

  const VectorXd& z = state.z.at(static_cast<std::size_t>(sensor));
  if (z.size() != ts.size())
    throw std::invalid_argument("weight_at: latent block size mismatch");

  MatrixXd Kss = eq_kernel_time(ts, ts, prior.time_kernel);
  Kss.diagonal().array() += prior.effective_jitter();
  const auto chol = jittered_llt(Kss, 0.0);
  const MatrixXd Kts = eq_kernel_time(times, ts, prior.time_kernel);
  return VectorXd::Constant(times.size(), prior.mean) +
         Kts * chol.llt.solve((z.array() - prior.mean).matrix());
}

VectorXd weight_at(const LatentState& state, const GaussianWeightPrior& prior,
                   int sensor, const VectorXd& times) {
  prior.validate();
  if (sensor < 0 || sensor >= static_cast<int>(state.z.size()) ||
      state.z[static_cast<std::size_t>(sensor)].size() == 0)
    return VectorXd::Ones(times.size());
  return VectorXd::Constant(times.size(),
                            state.z[static_cast<std::size_t>(sensor)][0]);
}

CalibrationModel::CalibrationModel(const Dataset& data, WeightPrior prior,
                                   KernelParams field_kernel, NoiseModel noise,
                                   double field_mean)
    : prior_(std::move(prior)),
      field_kernel_(std::move(field_kernel)),
      field_mean_(field_mean) {
  data.validate();
  field_kernel_.validate();
  noise.validate();
  std::visit([](const auto& p) { p.validate(); }, prior_);

  points_ = data.points();
  y_ = data.values();
  noise_var_ = VectorXd::Constant(data.size(), noise.variance);
  sensor_of_ = data.sensor_index();
  is_reference_.assign(static_cast<std::size_t>(data.n_sensors), false);
  for (int r : data.reference_sensors)
    is_reference_[static_cast<std::size_t>(r)] = true;
  K_field_ = eq_kernel(points_, points_, field_kernel_);

  layout_.offset.assign(static_cast<std::size_t>(data.n_sensors), -1);
  layout_.block.assign(static_cast<std::size_t>(data.n_sensors), 0);
  layout_.total = 0;

  for (int s = 0; s < data.n_sensors; ++s) {
    if (is_reference_[static_cast<std::size_t>(s)]) continue;

    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < points_.rows(); ++i)
      if (sensor_of_[i] == s) rows.push_back(i);

    SensorBlock blk;
    blk.sensor = s;
    blk.obs_rows = std::move(rows);

    if (const auto* sp = std::get_if<SparseWeightPrior>(&prior_)) {
      if (s >= static_cast<int>(sp->virtual_times.size()))
        continue;  // no virtual times means no latent entries
      const VectorXd& ts = sp->virtual_times[static_cast<std::size_t>(s)];
      if (ts.size() == 0) continue;
      MatrixXd Kss = eq_kernel_time(ts, ts, sp->time_kernel);
      Kss.diagonal().array() += sp->effective_jitter();
      blk.prior_chol = jittered_llt(Kss, 0.0);
      VectorXd obs_times(blk.obs_rows.size());
      for (std::size_t k = 0; k < blk.obs_rows.size(); ++k)
        obs_times[static_cast<Eigen::Index>(k)] =
            points_(blk.obs_rows[k], 2);
      const MatrixXd Kst = eq_kernel_time(ts, obs_times, sp->time_kernel);
      blk.interp = blk.prior_chol.llt.solve(Kst).transpose();
    } else {
      const auto& gp = std::get<GaussianWeightPrior>(prior_);
      blk.prior_chol = jittered_llt(MatrixXd::Constant(1, 1, gp.variance));
      blk.interp = MatrixXd::Ones(
          static_cast<Eigen::Index>(blk.obs_rows.size()), 1);
    }
    blk.prior_log_norm =
        -0.5 * blk.prior_chol.log_det() -
        0.5 * static_cast<double>(blk.interp.cols()) * kLogTwoPi;

    layout_.offset[static_cast<std::size_t>(s)] = layout_.total;
    layout_.block[static_cast<std::size_t>(s)] =
        static_cast<int>(blk.interp.cols());
    layout_.total += static_cast<int>(blk.interp.cols());
    blocks_.push_back(std::move(blk));
  }
}

LatentState CalibrationModel::prior_mean_state() const {
  const double mean = prior_mean_of(prior_);
  LatentState state;
  state.z.resize(layout_.offset.size());
  for (std::size_t s = 0; s < layout_.offset.size(); ++s)
    if (layout_.offset[s] >= 0)
      state.z[s] = VectorXd::Constant(layout_.block[s], mean);
  return state;
}

VectorXd CalibrationModel::observation_weights(const LatentState& state) const {
  const double mean = prior_mean_of(prior_);
  VectorXd w = VectorXd::Ones(points_.rows());
  for (const auto& blk : blocks_) {
    const VectorXd& z = state.z.at(static_cast<std::size_t>(blk.sensor));
    const VectorXd w_blk =
        VectorXd::Constant(static_cast<Eigen::Index>(blk.obs_rows.size()),
                           mean) +
        blk.interp * (z.array() - mean).matrix();
    for (std::size_t k = 0; k < blk.obs_rows.size(); ++k)
      w[blk.obs_rows[k]] = w_blk[static_cast<Eigen::Index>(k)];
  }
  return w;
}

VectorXd CalibrationModel::sensor_weights(const LatentState& state, int sensor,
                                          const VectorXd& times) const {
  for (const auto& blk : blocks_) {
    if (blk.sensor != sensor) continue;
    const VectorXd& z = state.z.at(static_cast<std::size_t>(sensor));
    if (const auto* sp = std::get_if<SparseWeightPrior>(&prior_)) {
      const VectorXd& ts =
          sp->virtual_times[static_cast<std::size_t>(sensor)];
      const MatrixXd Kts = eq_kernel_time(times, ts, sp->time_kernel);
      return VectorXd::Constant(times.size(), sp->mean) +
             Kts * blk.prior_chol.llt.solve((z.array() - sp->mean).matrix());
    }
    return VectorXd::Constant(times.size(), z[0]);
  }
  return VectorXd::Ones(times.size());
}

double CalibrationModel::log_prior(const LatentState& state) const {
  const double mean = prior_mean_of(prior_);
  double lp = 0.0;
  for (const auto& blk : blocks_) {
    const VectorXd u =
        (state.z.at(static_cast<std::size_t>(blk.sensor)).array() - mean)
            .matrix();
    lp += -0.5 * u.dot(blk.prior_chol.llt.solve(u)) + blk.prior_log_norm;
  }
  return lp;
}

double CalibrationModel::log_joint(const LatentState& state) const {
  const VectorXd w = observation_weights(state);
  if (!w.allFinite()) return kNegInf;

  MatrixXd C = w.asDiagonal() * K_field_ * w.asDiagonal();
  C.diagonal() += noise_var_;
  JitteredLlt chol;
  try {
    chol = jittered_llt(C);
  } catch (const NumericalError&) {
    return kNegInf;
  }
  const VectorXd r = y_ - field_mean_ * w;
  const VectorXd alpha = chol.llt.solve(r);
  const double ll = -0.5 * r.dot(alpha) - 0.5 * chol.log_det() -
                    0.5 * static_cast<double>(y_.size()) * kLogTwoPi;
  const double total = ll + log_prior(state);
  return std::isfinite(total) ? total : kNegInf;
}

double CalibrationModel::log_joint(const VectorXd& flat) const {
  return log_joint(layout_.unflatten(flat));
}

LatentState CalibrationModel::grad_log_joint(const LatentState& state) const {
  return layout_.unflatten(grad_log_joint(layout_.flatten(state)));
}

VectorXd CalibrationModel::grad_log_joint(const VectorXd& flat) const {
  const LatentState state = layout_.unflatten(flat);
  const double mean = prior_mean_of(prior_);
  const Eigen::Index n = y_.size();

  const VectorXd w = observation_weights(state);
  VectorXd grad = VectorXd::Constant(
      layout_.total, std::numeric_limits<double>::quiet_NaN());
  if (!w.allFinite()) return grad;

  MatrixXd C = w.asDiagonal() * K_field_ * w.asDiagonal();
  C.diagonal() += noise_var_;
  JitteredLlt chol;
  try {
    chol = jittered_llt(C);
  } catch (const NumericalError&) {
    return grad;
  }
  const VectorXd r = y_ - field_mean_ * w;
  const VectorXd alpha = chol.llt.solve(r);
  const MatrixXd Cinv = chol.llt.solve(MatrixXd::Identity(n, n));

  // d(log lik)/dw_i with C(w) = W K W + noise I and mean m0 * w:
  //   alpha_i (K W alpha)_i - (C^-1 W K)_(ii) + m0 alpha_i
  const VectorXd g_w = alpha.cwiseProduct(K_field_ * w.cwiseProduct(alpha)) -
                       Cinv.cwiseProduct(K_field_) * w + field_mean_ * alpha;

  for (const auto& blk : blocks_) {
    const int s = blk.sensor;
    const VectorXd& z = state.z.at(static_cast<std::size_t>(s));
    VectorXd g_obs(static_cast<Eigen::Index>(blk.obs_rows.size()));
    for (std::size_t k = 0; k < blk.obs_rows.size(); ++k)
      g_obs[static_cast<Eigen::Index>(k)] = g_w[blk.obs_rows[k]];
    const VectorXd prior_grad =
        -blk.prior_chol.llt.solve((z.array() - mean).matrix());
    grad.segment(layout_.offset[static_cast<std::size_t>(s)],
                 layout_.block[static_cast<std::size_t>(s)]) =
        blk.interp.transpose() * g_obs + prior_grad;
  }
  return grad;
}

GpPosterior CalibrationModel::predict_field(const LatentState& state,
                                            const MatrixXd& query_points) const {
  if (query_points.cols() != 3)
    throw std::invalid_argument("predict_field: query points must be N x 3");
  if (!query_points.allFinite())
    throw std::invalid_argument("predict_field: non-finite query point");

  const VectorXd w = observation_weights(state);
  MatrixXd C = w.asDiagonal() * K_field_ * w.asDiagonal();
  C.diagonal() += noise_var_;
  const auto chol = jittered_llt(C);

  const MatrixXd K_oq = eq_kernel(points_, query_points, field_kernel_);
  const MatrixXd B = w.asDiagonal() * K_oq;  // cov(y, f_q)
  const VectorXd r = y_ - field_mean_ * w;

  GpPosterior post;
  post.mean = VectorXd::Constant(query_points.rows(), field_mean_) +
              B.transpose() * chol.llt.solve(r);
  post.cov = eq_kernel(query_points, query_points, field_kernel_) -
             B.transpose() * chol.llt.solve(B);
  return post;
}

GpPosterior CalibrationModel::predict_field(const VectorXd& flat,
                                            const MatrixXd& query_points) const {
  return predict_field(layout_.unflatten(flat), query_points);
}

hmc::LogDensity CalibrationModel::log_density_callable() const {
  return [this](const VectorXd& flat) { return log_joint(flat); };
}

hmc::Gradient CalibrationModel::gradient_callable() const {
  return [this](const VectorXd& flat) { return grad_log_joint(flat); };
}

VectorXd map_estimate(const CalibrationModel& model, int max_iterations) {
  const VectorXd start = model.layout().flatten(model.prior_mean_state());
  if (model.dim() == 0) return start;
  const auto objective = [&model](const VectorXd& x, VectorXd& grad) {
    grad = -model.grad_log_joint(x);
    return -model.log_joint(x);
  };
  LbfgsOptions options;
  options.max_iterations = max_iterations;
  options.gradient_tol = 1e-5;
  try {
    const LbfgsResult result = lbfgs_minimize(objective, start, options);
    if (result.x.allFinite() && std::isfinite(result.f)) return result.x;
  } catch (const FitError&) {
  }
  return start;
}

SummaryBand posterior_summary(
    const std::vector<hmc::Chain>& chains,
    const std::function<VectorXd(const VectorXd&)>& extract) {
  Eigen::Index pooled = 0;
  for (const auto& c : chains) {
    if (c.n_samples() == 0)
      throw std::invalid_argument("posterior_summary: empty chain");
    pooled += c.n_samples();
  }
  if (chains.empty() || pooled < 10)
    throw std::invalid_argument(
        "posterior_summary: need at least one chain with >= 10 samples");

  MatrixXd extracted;
  Eigen::Index row = 0;
  for (const auto& c : chains) {
    for (Eigen::Index i = 0; i < c.n_samples(); ++i) {
      const VectorXd v = extract(c.samples.row(i).transpose());
      if (extracted.size() == 0) extracted.resize(pooled, v.size());
      extracted.row(row++) = v;
    }
  }

  const Eigen::Index dim = extracted.cols();
  SummaryBand band{VectorXd(dim), VectorXd(dim), VectorXd(dim), VectorXd(dim)};
  for (Eigen::Index j = 0; j < dim; ++j) {
    const VectorXd col = extracted.col(j);
    band.median[j] = quantile(col, 0.5);
    band.q025[j] = quantile(col, 0.025);
    band.q975[j] = quantile(col, 0.975);
    const double m = col.mean();
    band.se[j] = std::sqrt((col.array() - m).square().sum() /
                           static_cast<double>(col.size() - 1));
  }
  return band;
}

}  // namespace netcal
