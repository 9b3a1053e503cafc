#include "twinbox/plant.hpp"
#include "twinbox/thermal.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace twinbox;
using namespace twinbox::plant;

namespace {

PlantConfig default_config(std::uint64_t seed = 0) {
  PlantConfig cfg;
  cfg.rng_seed = seed;
  return cfg;
}

PlantConfig zero_mismatch_config() {
  PlantConfig cfg;
  cfg.wall_loss_coeff = 0.0;
  cfg.heater_lag_tau = 0.0;
  cfg.fan_leak_frac = 0.0;
  cfg.sensor_noise_sd = 0.0;
  return cfg;
}

std::string scenario_path(int n) {
  return std::string(TWINBOX_DATA_DIR) + "/scenarios/scenario" + std::to_string(n) + ".cfg";
}

}  // namespace

TEST_CASE("equilibrium at ambient is a fixed point without mismatch sources") {
  PlantConfig cfg = default_config();
  cfg.wall_loss_coeff = 0.0;
  cfg.fan_leak_frac = 0.0;
  const ThermalState at_ambient(22.0, 22.0);
  const auto next = plant_step(at_ambient, ControlInput(0, 0), 0.0, 60.0, cfg);
  CHECK(next.state.t_inside == doctest::Approx(22.0).epsilon(1e-12));
}

TEST_CASE("fan pulls the temperature strictly toward ambient") {
  const PlantConfig cfg = default_config();
  const ThermalState hot(30.0, 22.0);
  const auto next = plant_step(hot, ControlInput(0, 1), 0.0, 60.0, cfg);
  CHECK(next.state.t_inside < hot.t_inside);
  CHECK(next.state.t_inside >= hot.t_ambient - 1e-9);

  const ThermalState cold(20.0, 22.0);
  const auto up = plant_step(cold, ControlInput(0, 1), 0.0, 60.0, cfg);
  CHECK(up.state.t_inside > cold.t_inside);
  CHECK(up.state.t_inside <= cold.t_ambient + 1e-9);
}

TEST_CASE("full-heat step matches a fine-step Euler oracle") {
  const PlantConfig cfg = default_config();
  const ThermalState start(25.0, 22.0);
  const ControlInput u(1.0, 0);

  // Independent oracle: explicit Euler on the same equations at dt = 0.01 s.
  const double capacity = cfg.params.heat_capacity();
  const double flow = cfg.fan_leak_frac * cfg.params.f_max;
  double t = start.t_inside;
  double heat = 0.0;
  const double h = 0.01;
  for (int k = 0; k < 6000; ++k) {
    const double dT = heat / capacity - flow * (t - start.t_ambient) / cfg.params.volume -
                      cfg.wall_loss_coeff * (t - start.t_ambient) / capacity;
    const double dH = (u.heater_duty * cfg.params.h_max - heat) / cfg.heater_lag_tau;
    t += h * dT;
    heat += h * dH;
  }

  const auto step = plant_step(start, u, 0.0, 60.0, cfg);
  CHECK(std::abs(step.state.t_inside - t) < 0.01);
  CHECK(std::abs(step.delivered_heat - heat) < 0.5);
}

TEST_CASE("zero-mismatch plant equals the idealized model bit-for-bit") {
  const PlantConfig cfg = zero_mismatch_config();
  Rng rng(1234);
  for (int k = 0; k < 100; ++k) {
    const double t_amb = rng.uniform(18.0, 26.0);
    const ThermalState state(rng.uniform(15.0, 45.0), t_amb);
    const ControlInput u = quantize_control(rng.uniform(), rng.uniform());
    const auto step = plant_step(state, u, 0.0, 60.0, cfg);
    const double ideal = thermal_step(state.t_inside, state.t_ambient, u, cfg.params, 60.0,
                                      0.0, cfg.ode_cfg);
    CHECK(step.state.t_inside == ideal);
  }
}

TEST_CASE("higher heater duty never yields a lower next temperature") {
  const PlantConfig cfg = default_config();
  for (int fan = 0; fan <= 1; ++fan) {
    double prev = -1e9;
    for (int level = 0; level < kHeaterLevels; ++level) {
      const auto next = plant_step(ThermalState(26.0, 22.0),
                                   ControlInput(level * kHeaterStep, fan), 40.0, 60.0, cfg);
      CHECK(next.state.t_inside >= prev);
      prev = next.state.t_inside;
    }
  }
}

TEST_CASE("steady state under max heat matches T_amb + H_max / wall_loss") {
  PlantConfig cfg = default_config();
  cfg.wall_loss_coeff = 3.0;
  cfg.fan_leak_frac = 0.0;
  const double expected = cfg.ambient + cfg.params.h_max / cfg.wall_loss_coeff;

  PlantSim sim(cfg, cfg.ambient);
  ThermalState state = sim.truth();
  for (int k = 0; k < 120; ++k) state = sim.step(ControlInput(1.0, 0), 60.0);
  CHECK(std::abs(state.t_inside - expected) < 0.1);
}

TEST_CASE("read_sensor noise is seeded, calibrated and clamped") {
  PlantConfig cfg = default_config();
  const ThermalState truth(25.0, 22.0);

  cfg.sensor_noise_sd = 0.0;
  Rng rng0(5);
  const ThermalState clean = read_sensor(truth, cfg, rng0);
  CHECK(clean.t_inside == truth.t_inside);

  cfg.sensor_noise_sd = 0.25;
  Rng rng1(5);
  double sum = 0, sum_sq = 0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const double e = read_sensor(truth, cfg, rng1).t_inside - truth.t_inside;
    sum += e;
    sum_sq += e * e;
  }
  const double sd = std::sqrt(sum_sq / n - (sum / n) * (sum / n));
  CHECK(sd > 0.23);
  CHECK(sd < 0.27);

  // Same seed, same stream.
  Rng a(77), b(77);
  for (int k = 0; k < 100; ++k) {
    CHECK(read_sensor(truth, cfg, a).t_inside == read_sensor(truth, cfg, b).t_inside);
  }
}

TEST_CASE("scenario files load and match their declared kind") {
  for (int n = 1; n <= 6; ++n) {
    const ScenarioSpec spec = load_scenario(scenario_path(n));
    CHECK(spec.name == "scenario" + std::to_string(n));
    const bool subset = spec.test_range.first >= spec.train_range.first &&
                        spec.test_range.second <= spec.train_range.second;
    CHECK(subset == (spec.kind == ScenarioKind::interpolation));
  }
  // A spec whose kind contradicts the ranges is rejected.
  ScenarioSpec bad = load_scenario(scenario_path(1));
  bad.kind = ScenarioKind::extrapolation;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("designed schedules keep the true trajectory inside the band") {
  const PlantConfig cfg = default_config(3);
  for (int n : {1, 2, 3, 6}) {
    const ScenarioSpec spec = load_scenario(scenario_path(n));
    const Episode ep = generate_test_episode(spec, cfg);
    REQUIRE(ep.truth.samples.size() == static_cast<std::size_t>(spec.test_schedule.steps));
    double lo = 1e9, hi = -1e9;
    for (const auto& s : ep.truth.samples) {
      lo = std::min(lo, s.state.t_inside);
      hi = std::max(hi, s.state.t_inside);
    }
    CHECK(lo >= spec.test_range.first - 1.0);
    CHECK(hi <= spec.test_range.second + 1.0);
    // Sensed stays within the +-1 C contract as well.
    for (const auto& s : ep.sensed.samples) {
      CHECK(s.state.t_inside >= spec.test_range.first - 1.0);
      CHECK(s.state.t_inside <= spec.test_range.second + 1.0);
    }
  }
}

TEST_CASE("training sets cycle the full training range and use the fan") {
  const PlantConfig cfg = default_config(4);
  const ScenarioSpec spec = load_scenario(scenario_path(1));
  const auto series = generate_training_set(spec, cfg);
  REQUIRE(series.size() == static_cast<std::size_t>(spec.train_series));
  double lo = 1e9, hi = -1e9;
  int fan_steps = 0;
  for (const auto& traj : series) {
    for (const auto& s : traj.samples) {
      lo = std::min(lo, s.state.t_inside);
      hi = std::max(hi, s.state.t_inside);
      fan_steps += s.control.fan_on;
    }
  }
  CHECK(lo >= spec.train_range.first - 1.0);
  CHECK(hi <= spec.train_range.second + 1.0);
  // The wide band reaches down to ambient, so the designer can and does
  // exercise the fan; identification needs that excitation.
  CHECK(fan_steps > 10);
  CHECK(hi - lo > 8.0);
}

TEST_CASE("constant zero input from ambient stays flat") {
  PlantConfig cfg = default_config();
  cfg.sensor_noise_sd = 0.0;
  PlantSim sim(cfg, cfg.ambient);
  for (int k = 0; k < 50; ++k) {
    const ThermalState s = sim.step(ControlInput(0, 0), 60.0);
    CHECK(s.t_inside == doctest::Approx(cfg.ambient).epsilon(1e-9));
  }
}

TEST_CASE("dataset generation is byte-deterministic") {
  const ScenarioSpec spec = load_scenario(scenario_path(2));
  const PlantConfig cfg = default_config(9);
  std::ostringstream a, b;
  save_trajectory_csv(generate_dataset(spec, cfg), a);
  save_trajectory_csv(generate_dataset(spec, cfg), b);
  CHECK(a.str() == b.str());
  CHECK(a.str().size() > 1000);
}

TEST_CASE("plant_step validates inputs") {
  const PlantConfig cfg = default_config();
  CHECK_THROWS_AS(plant_step(ThermalState(25, 22), ControlInput(0, 0), 0.0, -1.0, cfg),
                  std::invalid_argument);
  PlantConfig bad = cfg;
  bad.fan_leak_frac = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::domain_error);
}
