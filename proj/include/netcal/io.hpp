#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "netcal/calib.hpp"
#include "netcal/hmc.hpp"
#include "netcal/simulator.hpp"
#include "netcal/types.hpp"

namespace netcal::io {

/// Invalid or inconsistent configuration (maps to CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Artifacts that do not belong together, e.g. chains written for a
/// different dataset or model (maps to CLI exit code 5).
class ArtifactMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct PriorSettings {
  enum class Type { gaussian, sparse_gp };
  Type type = Type::sparse_gp;
  double mean = 1.0;
  double variance = 25.0;     // weight variance (gaussian) or signal variance
  double lengthscale = 4.0;   // sparse-GP time lengthscale
  double ts_spacing = -1.0;   // virtual-point spacing; < 0 -> lengthscale / 2
};

struct GridSpec {
  double start = 0.0;
  double stop = 1.0;
  double step = 0.25;

  VectorXd times() const;
};

struct ModelSettings {
  // Field kernel in data units: variance plus x/y/t lengthscales.
  double field_variance = 1.0;
  double lengthscale_x = 1.0;
  double lengthscale_y = 1.0;
  double lengthscale_t = 1.5;
  double noise_sigma = 0.1;
  bool standardize = true;
  std::optional<double> field_mean;  // unset = reference mean ("auto")
  PriorSettings prior;
  std::optional<GridSpec> summary_grid;  // unset = spans the data
  int predict_thin = 4;

  KernelParams field_kernel() const {
    return {field_variance,
            Eigen::Vector3d(lengthscale_x, lengthscale_y, lengthscale_t)};
  }
};

struct HmcSettings {
  int n_chains = 4;
  int n_samples = 1000;
  int n_burnin = 500;
  double step_size = 0.1;
  int n_leapfrog = 20;
  bool adapt_step_size = true;
  double target_accept = 0.8;
  double init_jitter = 0.05;
  int thin_export = 5;            // thinning applied when writing chains.csv
  std::vector<double> mass;       // diagonal mass; empty = all ones,
                                  // a single entry broadcasts
};

struct PredictSettings {
  std::vector<SpaceTimePoint> points;            // explicit query points
  std::vector<double> xs, ys, ts;                // or a grid (cartesian product)

  MatrixXd query_points() const;
};

struct RunConfig {
  int version = 1;
  std::uint64_t seed = 0;
  std::optional<sim::ScenarioConfig> scenario;
  std::optional<std::string> input_data;
  ModelSettings model;
  HmcSettings hmc;
  PredictSettings predict;
};

/// Parses and validates a run configuration. Unknown keys anywhere in the
/// document are rejected with the offending path in the message.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Canonical serialization (sorted keys, full precision); its hash changes
/// exactly when some configuration field changes.
std::string canonical_config_json(const RunConfig& config);
std::uint64_t fnv1a64(std::string_view text);

// ---------------------------------------------------------------------------
// CSV artifacts
// ---------------------------------------------------------------------------

void write_observations_csv(const std::string& path, const Dataset& data);
Dataset read_observations_csv(const std::string& path);

void write_truth_csv(const std::string& path, const Dataset& data);
void attach_truth_csv(const std::string& path, Dataset& data);

/// chains.csv rows: chain_id, sample_idx, sensor_id, ts_idx, z_value.
void write_chains_csv(const std::string& path,
                      const std::vector<hmc::Chain>& chains,
                      const LatentLayout& layout, int thin);

/// Samples read back from chains.csv, one matrix per chain in the given
/// layout's flattening order. Throws ConfigError when the file's sensors
/// or block sizes do not match the layout.
std::vector<hmc::Chain> read_chains_csv(const std::string& path,
                                        const LatentLayout& layout);

struct WeightSummaryRow {
  int sensor = 0;
  double t = 0.0;  // NaN for time-constant (Gaussian-prior) weights
  double median = 0.0;
  double se = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

void write_weight_summary_csv(const std::string& path,
                              const std::vector<WeightSummaryRow>& rows);
std::vector<WeightSummaryRow> read_weight_summary_csv(const std::string& path);

struct FieldPosteriorRow {
  double x = 0.0, y = 0.0, t = 0.0;
  double median = 0.0;
  double se = 0.0;
};

void write_field_posterior_csv(const std::string& path,
                               const std::vector<FieldPosteriorRow>& rows);
std::vector<FieldPosteriorRow> read_field_posterior_csv(
    const std::string& path);

/// manifest.json: command, seed, canonical config hash and output list.
void write_manifest(const std::string& path, const std::string& command,
                    const RunConfig& config,
                    const std::vector<std::string>& outputs);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

/// Serializes a double with enough digits to round-trip exactly.
std::string format_double(double v);

}  // namespace netcal::io
