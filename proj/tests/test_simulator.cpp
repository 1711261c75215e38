#include <doctest.h>

#include <cmath>
#include <map>

#include "netcal/simulator.hpp"

using namespace netcal;
using namespace netcal::sim;

namespace {

ScenarioConfig two_sensor_config(std::uint64_t seed = 42) {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::two_sensor;
  cfg.seed = seed;
  cfg.noise_sigma = 0.08;
  return cfg;
}

ScenarioConfig network_config(std::uint64_t seed = 42) {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::network;
  cfg.seed = seed;
  cfg.t_begin = 0.0;
  cfg.t_end = 10.0;
  cfg.cadence = 2.0;
  cfg.noise_sigma = 0.06;
  cfg.field.mode = FieldSpec::Mode::gp;
  cfg.field.kernel = KernelParams{9.0, Eigen::Vector3d(1.5, 1.5, 1.5)};
  return cfg;
}

ScenarioConfig clogging_config(std::uint64_t seed = 42) {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::clogging;
  cfg.seed = seed;
  cfg.t_begin = 0.0;
  cfg.t_end = 12.0;
  cfg.cadence = 2.0;
  cfg.noise_sigma = 0.3;
  return cfg;
}

double distance(const SpaceTimePoint& a, const SpaceTimePoint& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace

TEST_CASE("the shared time grid covers the span at the requested cadence") {
  const ScenarioConfig cfg = two_sensor_config();
  const VectorXd grid = cfg.time_grid();
  REQUIRE(grid.size() == 45);
  CHECK(grid[0] == -1.0);
  CHECK(grid[grid.size() - 1] == doctest::Approx(10.0));
  CHECK(grid[1] - grid[0] == doctest::Approx(0.25));
}

TEST_CASE("two-sensor scenario: biased unit reads three times the truth") {
  const ScenarioConfig cfg = two_sensor_config();
  const Dataset data = gen_two_sensor(cfg);
  REQUIRE(data.truth.has_value());
  REQUIRE(data.n_sensors == 2);
  CHECK(data.reference_sensors == std::set<int>{0});

  const VectorXd noise =
      noise_draws(cfg.seed, data.size(), cfg.noise_sigma);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto& obs = data.observations[idx];
    const double w = obs.sensor == 1 ? 3.0 : 1.0;
    CHECK(data.truth->weight[idx] == w);
    // Exact reconstruction from recorded truth and the noise stream.
    CHECK(obs.value ==
          w * data.truth->field[idx] + noise[i]);
    if (obs.sensor == 1 && std::abs(data.truth->field[idx]) > 1.0)
      CHECK(obs.value / data.truth->field[idx] ==
            doctest::Approx(3.0).epsilon(0.1));
  }
}

TEST_CASE("two-sensor scenario: co-located until zero, separating after") {
  const Dataset data = gen_two_sensor(two_sensor_config());
  std::map<double, SpaceTimePoint> ref_pos, opc_pos;
  for (const auto& obs : data.observations) {
    if (obs.sensor == 0) ref_pos[obs.where.t] = obs.where;
    else opc_pos[obs.where.t] = obs.where;
  }
  double last_d = -1.0;
  for (const auto& [t, p] : opc_pos) {
    const double d = distance(p, ref_pos.at(t));
    if (t <= 0.0) {
      CHECK(d == 0.0);
    } else {
      CHECK(d > last_d);
    }
    last_d = d;
  }
}

TEST_CASE("an unbiased low-cost unit is statistically identical to the "
          "reference at shared points") {
  ScenarioConfig cfg = two_sensor_config();
  cfg.two_sensor.opc_weight = 1.0;
  const Dataset data = gen_two_sensor(cfg);
  const Eigen::Index half = data.size() / 2;
  double mean_abs_diff = 0.0;
  for (Eigen::Index k = 0; k < half; ++k) {
    const auto& ref = data.observations[static_cast<std::size_t>(k)];
    const auto& opc = data.observations[static_cast<std::size_t>(half + k)];
    REQUIRE(ref.where.t == opc.where.t);
    mean_abs_diff += std::abs(ref.value - opc.value);
  }
  mean_abs_diff /= static_cast<double>(half);
  // Differences are pure noise, sigma * sqrt(2) in scale.
  CHECK(mean_abs_diff < 4.0 * cfg.noise_sigma);
  CHECK(mean_abs_diff > 0.0);
}

TEST_CASE("network scenario: roles, visits and dwell ordering") {
  const ScenarioConfig cfg = network_config();
  const Dataset data = gen_network(cfg);
  REQUIRE(data.n_sensors == 7);
  CHECK(data.reference_sensors == std::set<int>{0});

  // Reference observations equal truth plus noise (weight one).
  const VectorXd noise =
      noise_draws(cfg.seed, data.size(), cfg.noise_sigma);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (data.observations[idx].sensor != 0) continue;
    CHECK(data.truth->weight[idx] == 1.0);
    CHECK(data.observations[idx].value ==
          data.truth->field[idx] + noise[i]);
  }

  // Per-tick positions by sensor.
  std::map<int, std::map<double, SpaceTimePoint>> pos;
  for (const auto& obs : data.observations)
    pos[obs.sensor][obs.where.t] = obs.where;

  const double tol = 0.05;
  for (int station : {3, 4, 5, 6}) {
    bool visited = false;
    for (const auto& [t, p] : pos[station])
      for (int mobile : {1, 2})
        if (distance(p, pos[mobile].at(t)) < tol) visited = true;
    CHECK_MESSAGE(visited, "static sensor ", station, " never visited");
  }

  // Mobile 2 spends longer co-located with the reference than mobile 1.
  double dwell1 = 0.0, dwell2 = 0.0;
  for (const auto& [t, p] : pos[0]) {
    if (distance(p, pos[1].at(t)) < tol) dwell1 += 1.0 / cfg.cadence;
    if (distance(p, pos[2].at(t)) < tol) dwell2 += 1.0 / cfg.cadence;
  }
  CHECK(dwell2 > dwell1);
  CHECK(dwell1 > 0.0);
}

TEST_CASE("network trajectories never exceed the speed bound") {
  const ScenarioConfig cfg = network_config();
  const Dataset data = gen_network(cfg);
  std::map<int, std::map<double, SpaceTimePoint>> pos;
  for (const auto& obs : data.observations)
    pos[obs.sensor][obs.where.t] = obs.where;
  const double dt = 1.0 / cfg.cadence;
  for (int mobile : {1, 2}) {
    SpaceTimePoint prev;
    bool have_prev = false;
    for (const auto& [t, p] : pos[mobile]) {
      if (have_prev) CHECK(distance(p, prev) <= cfg.max_speed() * dt + 1e-9);
      prev = p;
      have_prev = true;
    }
  }
}

TEST_CASE("clogging scenario: monotone degradation, recovery, banded truth") {
  const ScenarioConfig cfg = clogging_config();
  const Dataset data = gen_clogging(cfg);
  const double t_maintenance =
      cfg.t_begin + cfg.clogging.maintenance_frac * (cfg.t_end - cfg.t_begin);

  double prev_w = cfg.clogging.initial_weight + 1e-12;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto& obs = data.observations[idx];
    const double f = data.truth->field[idx];
    CHECK(f >= cfg.clogging.band_lo);
    CHECK(f <= cfg.clogging.band_hi);
    if (obs.sensor != 1) continue;
    const double w = data.truth->weight[idx];
    if (obs.where.t < t_maintenance) {
      CHECK(w <= prev_w);
      prev_w = w;
    } else {
      CHECK(w == cfg.clogging.initial_weight);
    }
  }
}

TEST_CASE("deterministic field evaluates identically at repeated points") {
  const ScenarioConfig cfg = two_sensor_config();
  MatrixXd pts(2, 3);
  pts << 0.4, 1.0, 2.5, 0.4, 1.0, 2.5;
  const VectorXd f = sample_true_field(cfg, pts);
  CHECK(f[0] == f[1]);
}

TEST_CASE("gp field draws are seed-reproducible") {
  ScenarioConfig cfg = network_config(7);
  MatrixXd pts(5, 3);
  pts << 0, 0, 0, 1, 0, 0.5, 2, 1, 1.0, 0, 2, 1.5, 3, 3, 2.0;
  const VectorXd a = sample_true_field(cfg, pts);
  const VectorXd b = sample_true_field(cfg, pts);
  CHECK(a == b);
  cfg.seed = 8;
  CHECK(a != sample_true_field(cfg, pts));
}

TEST_CASE("gp field variogram is consistent with the generating kernel") {
  ScenarioConfig cfg = network_config(4242);
  cfg.field.kernel = KernelParams{1.0, Eigen::Vector3d(1.0, 1.0, 2.0)};
  // 500 points along the time axis only.
  const int n = 500;
  MatrixXd pts = MatrixXd::Zero(n, 3);
  for (int i = 0; i < n; ++i) pts(i, 2) = 50.0 * i / (n - 1);
  const VectorXd f = sample_true_field(cfg, pts);

  for (const double lag : {1.0, 2.0, 3.0}) {
    double acc = 0.0;
    long count = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double h = std::abs(pts(j, 2) - pts(i, 2));
        if (std::abs(h - lag) > 0.25) continue;
        acc += 0.5 * std::pow(f[j] - f[i], 2);
        ++count;
      }
    }
    REQUIRE(count > 0);
    const double empirical = acc / static_cast<double>(count);
    const double expected =
        1.0 * (1.0 - std::exp(-0.5 * std::pow(lag / 2.0, 2)));
    CHECK(std::abs(empirical - expected) <= 0.3 * expected);
  }
}

TEST_CASE("regeneration with the same config is bit-identical") {
  for (const ScenarioConfig& cfg :
       {two_sensor_config(5), network_config(5), clogging_config(5)}) {
    const Dataset a = generate(cfg);
    const Dataset b = generate(cfg);
    REQUIRE(a.size() == b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      CHECK(a.observations[idx].value == b.observations[idx].value);
      CHECK(a.observations[idx].where.x == b.observations[idx].where.x);
      CHECK(a.truth->field[idx] == b.truth->field[idx]);
      CHECK(a.truth->weight[idx] == b.truth->weight[idx]);
    }
  }
}

TEST_CASE("trajectories validate their waypoint ordering") {
  Trajectory t;
  t.waypoints = {{0, 0, 0.0}, {1, 0, 1.0}, {1, 1, 0.5}};
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t.waypoints = {{0, 0, 0.0}, {1, 0, 1.0}, {1, 1, 2.0}};
  CHECK_NOTHROW(t.validate());
  const SpaceTimePoint mid = t.at(0.5);
  CHECK(mid.x == doctest::Approx(0.5));
  CHECK(mid.y == 0.0);
  const SpaceTimePoint before = t.at(-1.0);
  CHECK(before.x == 0.0);
  const SpaceTimePoint after = t.at(5.0);
  CHECK(after.x == 1.0);
  CHECK(after.y == 1.0);
}

TEST_CASE("scenario validation rejects degenerate configurations") {
  ScenarioConfig cfg = two_sensor_config();
  cfg.t_end = cfg.t_begin;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = two_sensor_config();
  cfg.cadence = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = network_config();
  cfg.kind = ScenarioKind::two_sensor;
  CHECK_THROWS_AS(gen_network(cfg), std::invalid_argument);
}
