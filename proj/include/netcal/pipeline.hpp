#pragma once

#include <memory>
#include <vector>

#include "netcal/calib.hpp"
#include "netcal/io.hpp"
#include "netcal/types.hpp"

namespace netcal::pipeline {

/// Sampler could not be started (maps to CLI exit code 4).
class InitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using io::ArtifactMismatch;

/// Observed values are divided by the reference sensors' standard
/// deviation before inference; weights are unit-free so only field
/// quantities need de-standardizing afterwards.
struct Standardization {
  double scale = 1.0;
  double ref_mean = 0.0;
};

Standardization compute_standardization(const Dataset& data, bool enabled);

/// A calibration model built from raw data plus model settings: data
/// rescaled, prior assembled, field prior mean resolved.
struct ModelBundle {
  Standardization standardization;
  Dataset scaled;
  WeightPrior prior;
  double field_mean_scaled = 0.0;
  std::unique_ptr<CalibrationModel> model;
};

ModelBundle build_model(const Dataset& raw, const io::ModelSettings& settings);

/// Time grid the weight summaries are reported on.
VectorXd summary_times(const Dataset& data, const io::ModelSettings& settings);

struct CalibrationOutput {
  std::vector<hmc::Chain> chains;
  std::vector<io::WeightSummaryRow> weight_rows;
  std::vector<hmc::Diagnostics> chain_diagnostics;
};

/// Runs the HMC chains from the prior-mean initialization and summarizes
/// per-sensor weights (trajectories for the sparse prior, scalars for the
/// Gaussian prior). Throws InitError when the joint density is not finite
/// at the start point. `n_chains_override` > 0 replaces settings.n_chains.
CalibrationOutput run_calibration(const ModelBundle& bundle,
                                  const io::HmcSettings& settings,
                                  std::uint64_t seed,
                                  const VectorXd& summary_grid,
                                  int n_chains_override = 0);

/// Weight summary rows from existing chains (used by tests and the CLI).
std::vector<io::WeightSummaryRow> summarize_weights(
    const ModelBundle& bundle, const std::vector<hmc::Chain>& chains,
    const VectorXd& summary_grid);

/// Field posterior over the query grid pooled across weight samples:
/// per query point the median of per-sample posterior means and the total
/// standard deviation (mean within-sample variance plus variance of the
/// means). Results are de-standardized to data units.
std::vector<io::FieldPosteriorRow> run_prediction(
    const ModelBundle& bundle, const std::vector<hmc::Chain>& chains,
    const MatrixXd& query_points, int thin);

}  // namespace netcal::pipeline
