#ifndef TWINBOX_PLANT_HPP
#define TWINBOX_PLANT_HPP

#include "twinbox/config.hpp"
#include "twinbox/core.hpp"
#include "twinbox/integrate.hpp"
#include "twinbox/rng.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace twinbox::plant {

// The simulated physical asset. Relative to the idealized energy balance it
// adds wall heat loss, a first-order heater lag, air leakage while the fan is
// off, and Gaussian sensor noise; with all four at zero it reduces to the
// idealized model exactly.
struct PlantConfig {
  PlantParams params;
  double wall_loss_coeff = 1.5;   // W/K through the enclosure walls
  double heater_lag_tau = 120.0;  // s, delivered-power time constant
  double fan_leak_frac = 0.02;    // fraction of f_max leaking when fan is off
  double sensor_noise_sd = 0.25;  // C, so +-2 sd covers the +-0.5 C sensor spec
  double ambient = 22.0;          // C
  double ambient_amplitude = 0.0; // optional slow ambient sinusoid
  double ambient_period_s = 86400.0;
  std::uint64_t rng_seed = 0;
  ode::IntegratorConfig ode_cfg{};

  void validate() const;
  bool zero_mismatch() const {
    return wall_loss_coeff == 0 && heater_lag_tau == 0 && fan_leak_frac == 0;
  }
  double ambient_at(double t_seconds) const;

  static PlantConfig from_config(const KvConfig& cfg);
};

struct PlantStepResult {
  ThermalState state;
  double delivered_heat;  // W, latent state of the heater lag filter
};

// Advances the true plant state over one zero-order-hold interval. Pure and
// deterministic; `delivered_heat` is the latent heater power entering the
// step. Ambient is held at state.t_ambient during the step and refreshed to
// ambient_at(t_now + dt) in the result.
PlantStepResult plant_step(const ThermalState& state, const ControlInput& u,
                           double delivered_heat, double dt, const PlantConfig& cfg,
                           double t_now = 0.0);

// Additive Gaussian measurement noise on the inside temperature, clamped to
// the sanity band. sd == 0 returns the input unchanged.
ThermalState read_sensor(const ThermalState& state, const PlantConfig& cfg, Rng& rng);

// Owns the latent heater state, the clock and the sensor-noise stream. One
// instance is single-owner mutable; independent instances can run in parallel.
class PlantSim {
 public:
  PlantSim(const PlantConfig& cfg, double initial_inside);

  const ThermalState& truth() const { return truth_; }
  double delivered_heat() const { return delivered_heat_; }
  double time() const { return time_; }
  const PlantConfig& config() const { return cfg_; }

  // Applies u for dt seconds and returns the new true state.
  ThermalState step(const ControlInput& u, double dt = kDefaultDt);

  // Noisy snapshot of the current state; advances the noise stream.
  ThermalState read_sensor();

 private:
  PlantConfig cfg_;
  ThermalState truth_;
  double delivered_heat_ = 0.0;
  double time_ = 0.0;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Scenario definitions and scripted data generation.

enum class ScenarioKind { interpolation, extrapolation };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& s);

// Parameters from which a fixed open-loop input sequence is designed: a
// seeded thermostat sweep on the noise-free plant that keeps the inside
// temperature within the scenario band.
struct ScheduleSpec {
  int steps = 212;
  std::vector<double> duties = {0.1, 0.2, 0.3};
  bool allow_fan = true;
  int dwell_min = 2;
  int dwell_max = 6;
  double margin = 0.4;  // hysteresis inset from the band edges, C
  std::uint64_t seed = 1;
};

struct ScenarioSpec {
  std::string name;
  ScenarioKind kind = ScenarioKind::interpolation;
  std::pair<double, double> train_range{21.8, 36.9};
  std::pair<double, double> test_range{25.5, 30.3};
  ScheduleSpec train_schedule;
  ScheduleSpec test_schedule;
  int train_series = 8;

  void validate() const;
};

ScenarioSpec load_scenario(const std::string& path);
ScenarioSpec scenario_from_config(const KvConfig& cfg);

// Designs the scripted control sequence for one episode: a hysteresis sweep
// between the band edges, with seeded duty variety, evaluated step-by-step on
// the noise-free plant so the resulting true trajectory stays inside
// [lo + 0.1, hi - 0.1].
std::vector<ControlInput> design_schedule(const PlantConfig& cfg,
                                          std::pair<double, double> range,
                                          const ScheduleSpec& spec, double initial_inside);

struct Episode {
  Trajectory sensed;
  Trajectory truth;
};

// Runs a designed schedule open-loop on the (noisy) plant and records both
// the sensed and the true trajectories.
Episode generate_episode(std::pair<double, double> range, const ScheduleSpec& spec,
                         const PlantConfig& cfg, std::uint64_t seed_offset = 0);

// The scenario's test trajectory as the models see it (sensed).
Trajectory generate_dataset(const ScenarioSpec& spec, const PlantConfig& cfg);

// Test trajectory with ground truth, for evaluation.
Episode generate_test_episode(const ScenarioSpec& spec, const PlantConfig& cfg);

// `train_series` independent sensed trajectories covering the training range.
std::vector<Trajectory> generate_training_set(const ScenarioSpec& spec, const PlantConfig& cfg);

// Identification runs for controller design: fast-switching duty walks with
// fan excitation over `band`, which persistently excite the heater-lag
// dynamics much better than the slow thermostat sweeps above.
std::vector<Trajectory> generate_identification_set(std::pair<double, double> band,
                                                    const PlantConfig& cfg, int series = 6,
                                                    int steps = 212, std::uint64_t seed = 301);

}  // namespace twinbox::plant

#endif  // TWINBOX_PLANT_HPP
