#include "netcal/simulator.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "netcal/kernels.hpp"
#include "netcal/linalg.hpp"

namespace netcal::sim {

namespace {

constexpr std::uint64_t kFieldStream = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kNoiseStream = 0xD1B54A32D192ED03ull;

using PositionFn = std::function<SpaceTimePoint(double)>;
using WeightFn = std::function<double(double)>;

double clogging_weight(const ScenarioConfig& cfg, double t) {
  const auto& c = cfg.clogging;
  const double span = cfg.t_end - cfg.t_begin;
  const double t_maintenance = cfg.t_begin + c.maintenance_frac * span;
  if (t >= t_maintenance) return c.initial_weight;
  const double frac = (t - cfg.t_begin) / (t_maintenance - cfg.t_begin);
  return c.initial_weight - (c.initial_weight - c.min_weight) * frac;
}

Dataset assemble(const ScenarioConfig& cfg, int n_sensors,
                 const std::set<int>& reference,
                 const std::vector<PositionFn>& position,
                 const std::vector<WeightFn>& weight) {
  cfg.validate();
  const VectorXd ticks = cfg.time_grid();

  Dataset data;
  data.n_sensors = n_sensors;
  data.reference_sensors = reference;
  data.truth = Dataset::Truth{};
  for (int s = 0; s < n_sensors; ++s) {
    for (Eigen::Index k = 0; k < ticks.size(); ++k) {
      Observation obs;
      obs.sensor = s;
      obs.where = position[static_cast<std::size_t>(s)](ticks[k]);
      data.observations.push_back(obs);
      data.truth->weight.push_back(
          weight[static_cast<std::size_t>(s)](ticks[k]));
    }
  }

  const VectorXd field = sample_true_field(cfg, data.points());
  const VectorXd noise =
      noise_draws(cfg.seed, data.size(), cfg.noise_sigma);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    data.truth->field.push_back(field[i]);
    data.observations[idx].value =
        data.truth->weight[idx] * field[i] + noise[i];
  }
  data.validate();
  return data;
}

}  // namespace

VectorXd ScenarioConfig::time_grid() const {
  const auto n = static_cast<Eigen::Index>(
                     std::floor((t_end - t_begin) * cadence + 1e-9)) +
                 1;
  VectorXd grid(n);
  for (Eigen::Index k = 0; k < n; ++k)
    grid[k] = t_begin + static_cast<double>(k) / cadence;
  return grid;
}

SpaceTimePoint Trajectory::at(double t) const {
  if (waypoints.empty())
    throw std::invalid_argument("Trajectory: no waypoints");
  if (t <= waypoints.front().t) {
    SpaceTimePoint p = waypoints.front();
    p.t = t;
    return p;
  }
  if (t >= waypoints.back().t) {
    SpaceTimePoint p = waypoints.back();
    p.t = t;
    return p;
  }
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (t > waypoints[i].t) continue;
    const auto& a = waypoints[i - 1];
    const auto& b = waypoints[i];
    const double frac = (t - a.t) / (b.t - a.t);
    return {a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y), t};
  }
  SpaceTimePoint p = waypoints.back();  // unreachable
  p.t = t;
  return p;
}

VectorXd noise_draws(std::uint64_t seed, Eigen::Index n, double sigma) {
  std::mt19937_64 rng(seed ^ kNoiseStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = sigma * normal(rng);
  return out;
}

VectorXd sample_true_field(const ScenarioConfig& config,
                           const MatrixXd& points) {
  if (!points.allFinite())
    throw std::invalid_argument("sample_true_field: non-finite points");
  const auto& f = config.field;

  if (f.mode == FieldSpec::Mode::deterministic) {
    VectorXd out(points.rows());
    if (config.kind == ScenarioKind::clogging) {
      // Smooth series confined to the configured ambient band.
      const auto& c = config.clogging;
      const double mid = 0.5 * (c.band_lo + c.band_hi);
      const double half = 0.4 * (c.band_hi - c.band_lo);
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double t = points(i, 2);
        out[i] = mid + half * (0.7 * std::sin(2.0 * std::numbers::pi * t / 6.0) +
                               0.3 * std::sin(2.0 * std::numbers::pi * t / 2.3));
      }
      return out;
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const double t = points(i, 2);
      out[i] = f.mean + f.amp1 * std::sin(2.0 * std::numbers::pi * t / f.period1) +
               f.amp2 * std::cos(2.0 * std::numbers::pi * t / f.period2);
    }
    return out;
  }

  // Seeded joint GP draw over all requested points.
  MatrixXd K = eq_kernel(points, points, f.kernel);
  const auto chol = jittered_llt(K, 1e-8 * f.kernel.variance);
  std::mt19937_64 rng(config.seed ^ kFieldStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd white(points.rows());
  for (Eigen::Index i = 0; i < white.size(); ++i) white[i] = normal(rng);
  return VectorXd::Constant(points.rows(), f.mean) +
         chol.llt.matrixL() * white;
}

Dataset gen_two_sensor(const ScenarioConfig& config) {
  if (config.kind != ScenarioKind::two_sensor)
    throw std::invalid_argument("gen_two_sensor: wrong scenario kind");
  const double speed = config.two_sensor.separation_speed;

  std::vector<PositionFn> position{
      [](double t) { return SpaceTimePoint{0.0, 0.0, t}; },
      [speed](double t) {
        return SpaceTimePoint{t > 0.0 ? speed * t : 0.0, 0.0, t};
      }};
  std::vector<WeightFn> weight{
      [](double) { return 1.0; },
      [w = config.two_sensor.opc_weight](double) { return w; }};
  return assemble(config, 2, {0}, position, weight);
}

std::vector<SpaceTimePoint> network_sites(const ScenarioConfig& config) {
  const double e = config.network.extent_km;
  return {
      {0.5 * e, 0.5 * e, 0.0},  // 0: reference
      {0.5 * e, 0.5 * e, 0.0},  // 1: mobile, starts at the reference
      {0.5 * e, 0.5 * e, 0.0},  // 2: mobile, starts at the reference
      {0.1 * e, 0.1 * e, 0.0},  // 3
      {0.9 * e, 0.1 * e, 0.0},  // 4
      {0.1 * e, 0.9 * e, 0.0},  // 5
      {0.9 * e, 0.9 * e, 0.0},  // 6
  };
}

std::vector<Trajectory> network_trajectories(const ScenarioConfig& config) {
  const auto sites = network_sites(config);
  const auto& net = config.network;

  // Routes loop until the span ends: the reference first, then this
  // mobile unit's assigned pair of static sites.
  const auto build = [&](double ref_dwell,
                         const std::vector<int>& stops) {
    Trajectory traj;
    double t = config.t_begin;
    SpaceTimePoint pos = sites[0];
    std::size_t leg = 0;
    traj.waypoints.push_back({pos.x, pos.y, t});
    while (t < config.t_end) {
      const int stop = stops[leg % stops.size()];
      const double dwell = (stop == 0) ? ref_dwell : net.dwell_site;
      t += dwell;
      traj.waypoints.push_back({pos.x, pos.y, t});
      if (t >= config.t_end) break;
      const int next = stops[(leg + 1) % stops.size()];
      const auto& target = sites[static_cast<std::size_t>(next)];
      const double dist = std::hypot(target.x - pos.x, target.y - pos.y);
      t += dist / net.travel_speed;
      pos = target;
      traj.waypoints.push_back({pos.x, pos.y, t});
      ++leg;
    }
    traj.validate();
    return traj;
  };

  return {build(net.dwell_ref_mobile1, {0, 5, 6}),
          build(net.dwell_ref_mobile2, {0, 3, 4})};
}

Dataset gen_network(const ScenarioConfig& config) {
  if (config.kind != ScenarioKind::network)
    throw std::invalid_argument("gen_network: wrong scenario kind");
  const auto sites = network_sites(config);
  const auto trajectories = network_trajectories(config);

  std::vector<double> w = config.network.true_weights;
  if (w.size() != 7)
    throw std::invalid_argument(
        "gen_network: need 7 true weights (entry 0 is the reference)");
  w[0] = 1.0;

  std::vector<PositionFn> position;
  std::vector<WeightFn> weight;
  for (int s = 0; s < 7; ++s) {
    if (s == 1 || s == 2) {
      const Trajectory& traj = trajectories[static_cast<std::size_t>(s - 1)];
      position.push_back([traj](double t) { return traj.at(t); });
    } else {
      const SpaceTimePoint site = sites[static_cast<std::size_t>(s)];
      position.push_back(
          [site](double t) { return SpaceTimePoint{site.x, site.y, t}; });
    }
    weight.push_back([value = w[static_cast<std::size_t>(s)]](double) {
      return value;
    });
  }
  return assemble(config, 7, {0}, position, weight);
}

Dataset gen_clogging(const ScenarioConfig& config) {
  if (config.kind != ScenarioKind::clogging)
    throw std::invalid_argument("gen_clogging: wrong scenario kind");

  std::vector<PositionFn> position{
      [](double t) { return SpaceTimePoint{0.0, 0.0, t}; },
      [](double t) { return SpaceTimePoint{0.0, 0.0, t}; }};
  std::vector<WeightFn> weight{
      [](double) { return 1.0; },
      [&config](double t) { return clogging_weight(config, t); }};
  return assemble(config, 2, {0}, position, weight);
}

Dataset generate(const ScenarioConfig& config) {
  switch (config.kind) {
    case ScenarioKind::two_sensor:
      return gen_two_sensor(config);
    case ScenarioKind::network:
      return gen_network(config);
    case ScenarioKind::clogging:
      return gen_clogging(config);
  }
  throw std::invalid_argument("generate: unknown scenario kind");
}

}  // namespace netcal::sim
