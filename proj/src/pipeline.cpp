#include "netcal/pipeline.hpp"

#include <cmath>
#include <limits>

#include "netcal/kernels.hpp"

namespace netcal::pipeline {

Standardization compute_standardization(const Dataset& data, bool enabled) {
  Standardization out;
  if (data.reference_sensors.empty())
    throw std::invalid_argument(
        "compute_standardization: dataset has no reference sensor");
  double sum = 0.0, sum_sq = 0.0;
  long n = 0;
  for (const auto& obs : data.observations) {
    if (!data.is_reference(obs.sensor)) continue;
    sum += obs.value;
    sum_sq += obs.value * obs.value;
    ++n;
  }
  if (n == 0)
    throw std::invalid_argument(
        "compute_standardization: reference sensors have no observations");
  out.ref_mean = sum / static_cast<double>(n);
  if (enabled && n > 1) {
    const double var =
        (sum_sq - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1);
    if (var > 0.0) out.scale = std::sqrt(var);
  }
  return out;
}

ModelBundle build_model(const Dataset& raw, const io::ModelSettings& settings) {
  ModelBundle bundle;
  bundle.standardization =
      compute_standardization(raw, settings.standardize);
  const double scale = bundle.standardization.scale;

  bundle.scaled = raw;
  bundle.scaled.truth.reset();  // inference must never see ground truth
  for (auto& obs : bundle.scaled.observations) obs.value /= scale;

  KernelParams field_kernel = settings.field_kernel();
  field_kernel.variance /= scale * scale;
  const NoiseModel noise =
      NoiseModel::from_sigma(settings.noise_sigma / scale);

  bundle.field_mean_scaled =
      settings.field_mean ? *settings.field_mean / scale
                          : bundle.standardization.ref_mean / scale;

  if (settings.prior.type == io::PriorSettings::Type::gaussian) {
    GaussianWeightPrior prior;
    prior.mean = settings.prior.mean;
    prior.variance = settings.prior.variance;
    bundle.prior = prior;
  } else {
    const KernelParams time_kernel{
        settings.prior.variance,
        VectorXd::Constant(1, settings.prior.lengthscale)};
    bundle.prior = SparseWeightPrior::for_dataset(
        bundle.scaled, time_kernel, settings.prior.ts_spacing,
        settings.prior.mean);
  }

  bundle.model = std::make_unique<CalibrationModel>(
      bundle.scaled, bundle.prior, field_kernel, noise,
      bundle.field_mean_scaled);
  return bundle;
}

VectorXd summary_times(const Dataset& data, const io::ModelSettings& settings) {
  if (settings.summary_grid) return settings.summary_grid->times();
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  for (const auto& obs : data.observations) {
    t_min = std::min(t_min, obs.where.t);
    t_max = std::max(t_max, obs.where.t);
  }
  if (!(t_min <= t_max)) return VectorXd::Zero(1);
  io::GridSpec grid;
  grid.start = t_min;
  grid.stop = t_max;
  grid.step = (t_max > t_min) ? (t_max - t_min) / 44.0 : 1.0;
  return grid.times();
}

std::vector<io::WeightSummaryRow> summarize_weights(
    const ModelBundle& bundle, const std::vector<hmc::Chain>& chains,
    const VectorXd& summary_grid) {
  const CalibrationModel& model = *bundle.model;
  const LatentLayout& layout = model.layout();

  std::vector<io::WeightSummaryRow> rows;
  for (std::size_t s = 0; s < layout.offset.size(); ++s) {
    if (layout.offset[s] < 0) continue;
    const int sensor = static_cast<int>(s);
    const bool sparse =
        std::holds_alternative<SparseWeightPrior>(bundle.prior);
    const VectorXd times =
        sparse ? summary_grid : VectorXd::Zero(1);

    const auto extract = [&](const VectorXd& flat) {
      return model.sensor_weights(layout.unflatten(flat), sensor, times);
    };
    const SummaryBand band = posterior_summary(chains, extract);
    for (Eigen::Index k = 0; k < times.size(); ++k) {
      io::WeightSummaryRow row;
      row.sensor = sensor;
      row.t = sparse ? times[k]
                     : std::numeric_limits<double>::quiet_NaN();
      row.median = band.median[k];
      row.se = band.se[k];
      row.q025 = band.q025[k];
      row.q975 = band.q975[k];
      rows.push_back(row);
    }
  }
  return rows;
}

CalibrationOutput run_calibration(const ModelBundle& bundle,
                                  const io::HmcSettings& settings,
                                  std::uint64_t seed,
                                  const VectorXd& summary_grid,
                                  int n_chains_override) {
  const CalibrationModel& model = *bundle.model;
  CalibrationOutput out;
  if (model.dim() == 0) return out;  // nothing to calibrate

  const VectorXd init = map_estimate(model);
  if (!std::isfinite(model.log_joint(init)))
    throw InitError("calibration: joint density not finite at the start point");

  hmc::Config cfg;
  cfg.step_size = settings.step_size;
  cfg.n_leapfrog = settings.n_leapfrog;
  cfg.n_samples = settings.n_samples;
  cfg.n_burnin = settings.n_burnin;
  cfg.seed = seed;
  cfg.adapt_step_size = settings.adapt_step_size;
  cfg.target_accept = settings.target_accept;
  if (!settings.mass.empty()) {
    if (settings.mass.size() == 1) {
      cfg.mass = VectorXd::Constant(model.dim(), settings.mass[0]);
    } else if (static_cast<int>(settings.mass.size()) == model.dim()) {
      cfg.mass = Eigen::Map<const VectorXd>(
          settings.mass.data(), static_cast<Eigen::Index>(settings.mass.size()));
    } else {
      throw io::ConfigError(
          "hmc.mass: expected one entry or one per latent dimension");
    }
  }

  const int n_chains =
      n_chains_override > 0 ? n_chains_override : settings.n_chains;
  out.chains =
      hmc::run_chains(model.log_density_callable(), model.gradient_callable(),
                      init, cfg, n_chains, settings.init_jitter);
  for (const auto& chain : out.chains)
    out.chain_diagnostics.push_back(hmc::diagnostics(chain));
  out.weight_rows = summarize_weights(bundle, out.chains, summary_grid);
  return out;
}

std::vector<io::FieldPosteriorRow> run_prediction(
    const ModelBundle& bundle, const std::vector<hmc::Chain>& chains,
    const MatrixXd& query_points, int thin) {
  if (thin < 1) throw std::invalid_argument("run_prediction: thin < 1");
  const CalibrationModel& model = *bundle.model;
  const double scale = bundle.standardization.scale;
  const Eigen::Index n_query = query_points.rows();

  std::vector<VectorXd> means;
  VectorXd var_sum = VectorXd::Zero(n_query);
  if (model.dim() == 0) {
    LatentState empty;
    empty.z.resize(bundle.scaled.n_sensors >= 0
                        ? static_cast<std::size_t>(bundle.scaled.n_sensors)
                        : 0);
    const GpPosterior post = model.predict_field(empty, query_points);
    means.push_back(post.mean);
    var_sum += post.variances().cwiseMax(0.0);
  } else {
    if (chains.empty())
      throw ArtifactMismatch("run_prediction: no chains supplied");
    for (const auto& chain : chains) {
      if (chain.samples.cols() != model.dim())
        throw ArtifactMismatch(
            "run_prediction: chain dimension does not match the model");
      for (Eigen::Index i = 0; i < chain.n_samples(); i += thin) {
        const GpPosterior post =
            model.predict_field(VectorXd(chain.samples.row(i).transpose()),
                                query_points);
        means.push_back(post.mean);
        var_sum += post.variances().cwiseMax(0.0);
      }
    }
  }

  const auto n_samples = static_cast<Eigen::Index>(means.size());
  std::vector<io::FieldPosteriorRow> rows;
  for (Eigen::Index q = 0; q < n_query; ++q) {
    VectorXd mean_q(n_samples);
    for (Eigen::Index s = 0; s < n_samples; ++s)
      mean_q[s] = means[static_cast<std::size_t>(s)][q];
    const double med = quantile(mean_q, 0.5);
    const double mean_of_means = mean_q.mean();
    const double var_of_means =
        n_samples > 1 ? (mean_q.array() - mean_of_means).square().sum() /
                            static_cast<double>(n_samples - 1)
                      : 0.0;
    const double total_var =
        var_sum[q] / static_cast<double>(n_samples) + var_of_means;

    io::FieldPosteriorRow row;
    row.x = query_points(q, 0);
    row.y = query_points(q, 1);
    row.t = query_points(q, 2);
    row.median = med * scale;
    row.se = std::sqrt(std::max(total_var, 0.0)) * scale;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace netcal::pipeline
