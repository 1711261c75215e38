#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "netcal/types.hpp"

namespace netcal::sim {

enum class ScenarioKind { two_sensor, network, clogging };

/// Generative model of the true pollution field. The deterministic mode is
/// a fixed smooth function of time only (identical at every location); the
/// gp mode draws a seeded sample from an EQ-kernel GP over space-time.
struct FieldSpec {
  enum class Mode { deterministic, gp };
  Mode mode = Mode::deterministic;
  KernelParams kernel{1.0, Eigen::Vector3d(1.0, 1.0, 1.5)};
  double mean = 0.0;
  double amp1 = 5.0, period1 = 7.0;
  double amp2 = 2.0, period2 = 3.0;
};

struct TwoSensorSpec {
  double opc_weight = 3.0;       // multiplicative bias of the low-cost unit
  double separation_speed = 1.0; // km per time unit after separation
};

struct NetworkSpec {
  double extent_km = 10.0;
  // True weights per sensor 0..6; entry 0 is forced to 1.
  std::vector<double> true_weights = {1.0, 1.3, 0.7, 1.8, 0.6, 2.2, 1.4};
  double travel_speed = 8.0;  // km per time unit, also the speed bound
  double dwell_site = 1.0;
  double dwell_ref_mobile1 = 0.7;
  double dwell_ref_mobile2 = 2.2;
};

struct CloggingSpec {
  double initial_weight = 1.0;
  double min_weight = 0.4;
  double maintenance_frac = 0.7;  // position of the maintenance event
  double band_lo = 10.0;
  double band_hi = 40.0;
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::two_sensor;
  std::uint64_t seed = 0;
  double t_begin = -1.0;
  double t_end = 10.0;
  double cadence = 4.0;  // observations per sensor per time unit
  double noise_sigma = 0.1;
  FieldSpec field;
  TwoSensorSpec two_sensor;
  NetworkSpec network;
  CloggingSpec clogging;

  double max_speed() const { return network.travel_speed; }

  void validate() const {
    if (!(t_end > t_begin))
      throw std::invalid_argument("ScenarioConfig: time span must be positive");
    if (!(cadence > 0.0))
      throw std::invalid_argument("ScenarioConfig: cadence must be positive");
    if (!(noise_sigma >= 0.0))
      throw std::invalid_argument("ScenarioConfig: noise sigma must be >= 0");
  }

  /// Shared observation time grid: t_begin + k / cadence.
  VectorXd time_grid() const;
};

/// Piecewise-linear path through waypoints with strictly increasing times.
/// Positions are held constant before the first and after the last waypoint.
struct Trajectory {
  std::vector<SpaceTimePoint> waypoints;

  SpaceTimePoint at(double t) const;

  void validate() const {
    for (std::size_t i = 1; i < waypoints.size(); ++i)
      if (!(waypoints[i].t > waypoints[i - 1].t))
        throw std::invalid_argument(
            "Trajectory: waypoint times must be strictly increasing");
  }
};

/// Two co-located instruments (reference and biased low-cost unit); the
/// low-cost unit moves away at time zero. Ground truth recorded.
Dataset gen_two_sensor(const ScenarioConfig& config);

/// Seven sensors: static reference (0), two mobile units (1, 2) shuttling
/// between the sites, four static low-cost units (3..6). Mobile 2 dwells
/// at the reference longer than mobile 1.
Dataset gen_network(const ScenarioConfig& config);

/// One reference plus one degrading sensor whose weight decays until a
/// maintenance event restores it. The true series stays inside the
/// configured band under the default field.
Dataset gen_clogging(const ScenarioConfig& config);

Dataset generate(const ScenarioConfig& config);

/// True field values at the given space-time points (rows x,y,t), either
/// the fixed deterministic function or a seeded GP draw.
VectorXd sample_true_field(const ScenarioConfig& config,
                           const MatrixXd& points);

/// The observation noise stream: N(0, sigma^2) draws in observation order,
/// reproducible from the scenario seed alone.
VectorXd noise_draws(std::uint64_t seed, Eigen::Index n, double sigma);

/// Mobile-unit trajectories of the network scenario (index 0 = sensor 1).
std::vector<Trajectory> network_trajectories(const ScenarioConfig& config);

/// Static site locations of the network scenario, indexed by sensor id
/// (mobile sensors 1 and 2 carry their start location).
std::vector<SpaceTimePoint> network_sites(const ScenarioConfig& config);

}  // namespace netcal::sim
