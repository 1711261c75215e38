#pragma once

#include <Eigen/Dense>

#include <functional>
#include <variant>
#include <vector>

#include "netcal/hmc.hpp"
#include "netcal/linalg.hpp"
#include "netcal/types.hpp"

namespace netcal {

/// Sparse GP prior over each sensor's calibration-weight trajectory:
/// pseudo-observations z at per-sensor virtual time points. The weight at
/// any time is the GP posterior mean given z.
struct SparseWeightPrior {
  std::vector<VectorXd> virtual_times;  // indexed by sensor id; empty = none
  KernelParams time_kernel;             // 1-d EQ kernel over time
  double mean = 1.0;
  double jitter = -1.0;  // diagonal stabilizer; < 0 picks 1e-8 * variance

  double effective_jitter() const {
    return jitter >= 0.0 ? jitter : 1e-8 * time_kernel.variance;
  }

  void validate() const {
    time_kernel.validate();
    if (time_kernel.lengthscales.size() != 1)
      throw std::invalid_argument(
          "SparseWeightPrior: time kernel must have a single lengthscale");
    for (const auto& ts : virtual_times)
      for (Eigen::Index i = 1; i < ts.size(); ++i)
        if (!(ts[i] > ts[i - 1]))
          throw std::invalid_argument(
              "SparseWeightPrior: virtual times must be strictly increasing");
  }

  /// Uniform virtual-time grids spanning each non-reference sensor's
  /// observation interval. Spacing defaults to half the time lengthscale.
  static SparseWeightPrior for_dataset(const Dataset& data,
                                       const KernelParams& time_kernel,
                                       double spacing = -1.0,
                                       double mean = 1.0);
};

/// Static Gaussian prior: one time-constant weight per sensor.
struct GaussianWeightPrior {
  double mean = 1.0;
  double variance = 25.0;

  void validate() const {
    if (!(variance > 0.0))
      throw std::invalid_argument("GaussianWeightPrior: variance must be > 0");
  }
};

using WeightPrior = std::variant<SparseWeightPrior, GaussianWeightPrior>;

/// Latent variables of the calibration model: per non-reference sensor,
/// the pseudo-observations at its virtual time points (sparse prior) or a
/// single scalar weight (Gaussian prior). Reference sensors carry no
/// entries; their weight is pinned to 1.
struct LatentState {
  std::vector<VectorXd> z;  // indexed by sensor id; empty for reference
};

/// Flattening order of LatentState into one vector: ascending sensor id.
struct LatentLayout {
  std::vector<int> offset;  // -1 for sensors without latent entries
  std::vector<int> block;   // block sizes
  int total = 0;

  LatentState unflatten(const VectorXd& flat) const;
  VectorXd flatten(const LatentState& state) const;
};

/// Weight trajectory of one sensor under the sparse prior: the GP
/// posterior mean through (t_s, z). Sensors without virtual times (the
/// reference) return all ones.
VectorXd weight_at(const LatentState& state, const SparseWeightPrior& prior,
                   int sensor, const VectorXd& times);

/// Gaussian-prior variant: the weight is constant over time.
VectorXd weight_at(const LatentState& state, const GaussianWeightPrior& prior,
                   int sensor, const VectorXd& times);

/// The scaled-measurement joint model: observations y are a per-sensor,
/// per-time weight times a latent spatio-temporal GP field plus noise.
/// The field is marginalized analytically, so the only latent variables
/// are the weight pseudo-observations. Weight and field hyperparameters
/// stay fixed. All const methods are safe to call concurrently.
class CalibrationModel {
 public:
  CalibrationModel(const Dataset& data, WeightPrior prior,
                   KernelParams field_kernel, NoiseModel noise,
                   double field_mean = 0.0);

  int dim() const { return layout_.total; }
  const LatentLayout& layout() const { return layout_; }
  const WeightPrior& prior() const { return prior_; }
  double field_mean() const { return field_mean_; }

  LatentState prior_mean_state() const;

  /// log p(z) + log N(y; m0 * w(z), W K_f W^T + noise I). Returns -inf
  /// instead of throwing when the density is not numerically evaluable.
  double log_joint(const LatentState& state) const;
  double log_joint(const VectorXd& flat) const;

  /// Exact gradient of log_joint with respect to every latent entry.
  VectorXd grad_log_joint(const VectorXd& flat) const;
  LatentState grad_log_joint(const LatentState& state) const;

  /// Per-observation weights implied by the latent state.
  VectorXd observation_weights(const LatentState& state) const;

  /// Weight trajectory for one sensor (cached factorizations).
  VectorXd sensor_weights(const LatentState& state, int sensor,
                          const VectorXd& times) const;

  /// Posterior of the latent field at query points (rows x,y,t) given the
  /// observations under the weights implied by `state`.
  GpPosterior predict_field(const LatentState& state,
                            const MatrixXd& query_points) const;
  GpPosterior predict_field(const VectorXd& flat,
                            const MatrixXd& query_points) const;

  hmc::LogDensity log_density_callable() const;
  hmc::Gradient gradient_callable() const;

 private:
  struct SensorBlock {
    int sensor = 0;
    std::vector<Eigen::Index> obs_rows;  // rows of this sensor's observations
    MatrixXd interp;        // obs weights = mean + interp * (z - mean)
    JitteredLlt prior_chol; // factor of the prior covariance of z
    double prior_log_norm = 0.0;
  };

  double log_prior(const LatentState& state) const;

  WeightPrior prior_;
  LatentLayout layout_;
  KernelParams field_kernel_;
  // Per-observation noise variances. Currently filled with one shared
  // value; a per-sensor noise model only needs to change how this vector
  // is built.
  VectorXd noise_var_;
  double field_mean_ = 0.0;

  MatrixXd points_;   // observation locations, N x 3
  VectorXd y_;        // observed values
  VectorXi sensor_of_;
  std::vector<bool> is_reference_;
  MatrixXd K_field_;  // field kernel Gram over observation points
  std::vector<SensorBlock> blocks_;  // one per sensor with latent entries
};

/// Pointwise median, standard error (sample standard deviation across
/// pooled post-burn-in samples) and central 95% interval of an extracted
/// quantity. The extractor maps a flattened latent sample to the vector
/// being summarised.
struct SummaryBand {
  VectorXd median;
  VectorXd se;
  VectorXd q025;
  VectorXd q975;
};

SummaryBand posterior_summary(
    const std::vector<hmc::Chain>& chains,
    const std::function<VectorXd(const VectorXd&)>& extract);

/// Posterior mode of the latent state, found by L-BFGS from the prior
/// mean. Used to start the sampler near the dominant mass; falls back to
/// the prior mean when the optimization cannot make progress.
VectorXd map_estimate(const CalibrationModel& model, int max_iterations = 200);

}  // namespace netcal
