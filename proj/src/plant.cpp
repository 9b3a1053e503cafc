#include "twinbox/plant.hpp"

#include "twinbox/thermal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace twinbox::plant {

void PlantConfig::validate() const {
  params.validate();
  if (wall_loss_coeff < 0) throw std::domain_error("PlantConfig: wall_loss_coeff must be >= 0");
  if (heater_lag_tau < 0) throw std::domain_error("PlantConfig: heater_lag_tau must be >= 0");
  if (fan_leak_frac < 0 || fan_leak_frac >= 1) {
    throw std::domain_error("PlantConfig: fan_leak_frac must be in [0, 1)");
  }
  if (sensor_noise_sd < 0) throw std::domain_error("PlantConfig: sensor_noise_sd must be >= 0");
}

double PlantConfig::ambient_at(double t_seconds) const {
  if (ambient_amplitude == 0.0) return ambient;
  return ambient +
         ambient_amplitude * std::sin(2.0 * 3.14159265358979323846 * t_seconds / ambient_period_s);
}

PlantConfig PlantConfig::from_config(const KvConfig& cfg) {
  PlantConfig pc;
  pc.params.h_max = cfg.get_double("plant.h_max", pc.params.h_max);
  pc.params.f_max = PlantParams::flow_per_hour(
      cfg.get_double("plant.f_max_m3_per_h", pc.params.f_max * 3600.0));
  pc.params.volume = cfg.get_double("plant.volume", pc.params.volume);
  pc.params.rho = cfg.get_double("plant.rho", pc.params.rho);
  pc.params.cp = cfg.get_double("plant.cp", pc.params.cp);
  pc.wall_loss_coeff = cfg.get_double("plant.wall_loss_coeff", pc.wall_loss_coeff);
  pc.heater_lag_tau = cfg.get_double("plant.heater_lag_tau", pc.heater_lag_tau);
  pc.fan_leak_frac = cfg.get_double("plant.fan_leak_frac", pc.fan_leak_frac);
  pc.sensor_noise_sd = cfg.get_double("plant.sensor_noise_sd", pc.sensor_noise_sd);
  pc.ambient = cfg.get_double("plant.ambient", pc.ambient);
  pc.ambient_amplitude = cfg.get_double("plant.ambient_amplitude", pc.ambient_amplitude);
  pc.ambient_period_s = cfg.get_double("plant.ambient_period_s", pc.ambient_period_s);
  pc.rng_seed = cfg.get_u64("plant.rng_seed", pc.rng_seed);
  pc.validate();
  return pc;
}

PlantStepResult plant_step(const ThermalState& state, const ControlInput& u,
                           double delivered_heat, double dt, const PlantConfig& cfg,
                           double t_now) {
  if (!(dt > 0)) throw std::invalid_argument("plant_step: dt must be > 0");
  const PlantParams& p = cfg.params;
  const double t_amb = state.t_ambient;
  const double t_amb_next = cfg.ambient_at(t_now + dt);
  const double capacity = p.heat_capacity();
  const double commanded = u.heater_duty * p.h_max;

  if (cfg.zero_mismatch()) {
    // Identical code path to the idealized model so the equivalence is
    // bit-for-bit, not merely within tolerance.
    const double t_next = thermal_step(state.t_inside, t_amb, u, p, dt, 0.0, cfg.ode_cfg);
    return {ThermalState(t_next, t_amb_next), commanded};
  }

  const double flow = u.fan_on ? p.f_max : cfg.fan_leak_frac * p.f_max;
  const double wall_rate = cfg.wall_loss_coeff / capacity;  // 1/s

  if (cfg.heater_lag_tau == 0.0) {
    ode::OdeProblem<double> problem;
    problem.dimension = 1;
    problem.t0 = 0.0;
    problem.t1 = dt;
    problem.y0 = ode::Vector<double>::Constant(1, state.t_inside);
    problem.rhs = [&](double, const ode::Vector<double>& y) {
      ode::Vector<double> dy(1);
      dy[0] = commanded / capacity - flow * (y[0] - t_amb) / p.volume -
              wall_rate * (y[0] - t_amb);
      return dy;
    };
    const double t_next = ode::solve_rk45(problem, cfg.ode_cfg).final_state()[0];
    return {ThermalState(t_next, t_amb_next), commanded};
  }

  ode::OdeProblem<double> problem;
  problem.dimension = 2;
  problem.t0 = 0.0;
  problem.t1 = dt;
  problem.y0 = ode::Vector<double>(2);
  problem.y0 << state.t_inside, delivered_heat;
  problem.rhs = [&](double, const ode::Vector<double>& y) {
    ode::Vector<double> dy(2);
    dy[0] = y[1] / capacity - flow * (y[0] - t_amb) / p.volume - wall_rate * (y[0] - t_amb);
    dy[1] = (commanded - y[1]) / cfg.heater_lag_tau;
    return dy;
  };
  const auto sol = ode::solve_rk45(problem, cfg.ode_cfg);
  return {ThermalState(sol.final_state()[0], t_amb_next), sol.final_state()[1]};
}

ThermalState read_sensor(const ThermalState& state, const PlantConfig& cfg, Rng& rng) {
  if (cfg.sensor_noise_sd == 0.0) return state;
  const double noisy = state.t_inside + rng.normal(0.0, cfg.sensor_noise_sd);
  return ThermalState(std::clamp(noisy, kTempBandLow, kTempBandHigh), state.t_ambient);
}

PlantSim::PlantSim(const PlantConfig& cfg, double initial_inside)
    : cfg_(cfg), truth_(initial_inside, cfg.ambient_at(0.0)), rng_(cfg.rng_seed) {
  cfg_.validate();
}

ThermalState PlantSim::step(const ControlInput& u, double dt) {
  const PlantStepResult next = plant_step(truth_, u, delivered_heat_, dt, cfg_, time_);
  truth_ = next.state;
  delivered_heat_ = next.delivered_heat;
  time_ += dt;
  return truth_;
}

ThermalState PlantSim::read_sensor() { return plant::read_sensor(truth_, cfg_, rng_); }

// ---------------------------------------------------------------------------

std::string to_string(ScenarioKind kind) {
  return kind == ScenarioKind::interpolation ? "interpolation" : "extrapolation";
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "interpolation") return ScenarioKind::interpolation;
  if (s == "extrapolation") return ScenarioKind::extrapolation;
  throw std::invalid_argument("unknown scenario kind: " + s);
}

void ScenarioSpec::validate() const {
  if (!(train_range.first < train_range.second) || !(test_range.first < test_range.second)) {
    throw std::invalid_argument("ScenarioSpec " + name + ": ranges must be ordered");
  }
  const bool subset = test_range.first >= train_range.first &&
                      test_range.second <= train_range.second;
  if (subset != (kind == ScenarioKind::interpolation)) {
    throw std::invalid_argument("ScenarioSpec " + name +
                                ": kind must be interpolation iff test range is inside "
                                "the training range");
  }
  if (train_series < 1) throw std::invalid_argument("ScenarioSpec: train_series must be >= 1");
  for (const auto* sched : {&train_schedule, &test_schedule}) {
    if (sched->steps < 2) throw std::invalid_argument("ScheduleSpec: steps must be >= 2");
    if (sched->duties.empty()) throw std::invalid_argument("ScheduleSpec: empty duty list");
    if (sched->dwell_min < 1 || sched->dwell_max < sched->dwell_min) {
      throw std::invalid_argument("ScheduleSpec: bad dwell bounds");
    }
    if (!(sched->margin > 0)) throw std::invalid_argument("ScheduleSpec: margin must be > 0");
  }
}

namespace {

ScheduleSpec schedule_from_config(const KvConfig& cfg, const std::string& section) {
  ScheduleSpec s;
  s.steps = cfg.get_int(section + ".steps", s.steps);
  s.duties = cfg.get_doubles(section + ".duties", s.duties);
  s.allow_fan = cfg.get_bool(section + ".allow_fan", s.allow_fan);
  s.dwell_min = cfg.get_int(section + ".dwell_min", s.dwell_min);
  s.dwell_max = cfg.get_int(section + ".dwell_max", s.dwell_max);
  s.margin = cfg.get_double(section + ".margin", s.margin);
  s.seed = cfg.get_u64(section + ".seed", s.seed);
  return s;
}

}  // namespace

ScenarioSpec scenario_from_config(const KvConfig& cfg) {
  ScenarioSpec spec;
  spec.name = cfg.require_str("scenario.name");
  spec.kind = scenario_kind_from_string(cfg.require_str("scenario.kind"));
  spec.train_range = {cfg.get_double("scenario.train_low", spec.train_range.first),
                      cfg.get_double("scenario.train_high", spec.train_range.second)};
  spec.test_range = {cfg.get_double("scenario.test_low", spec.test_range.first),
                     cfg.get_double("scenario.test_high", spec.test_range.second)};
  spec.train_series = cfg.get_int("scenario.train_series", spec.train_series);
  spec.train_schedule = schedule_from_config(cfg, "train_schedule");
  spec.test_schedule = schedule_from_config(cfg, "test_schedule");
  spec.validate();
  return spec;
}

ScenarioSpec load_scenario(const std::string& path) {
  return scenario_from_config(KvConfig::parse_file(path));
}

std::vector<ControlInput> design_schedule(const PlantConfig& cfg,
                                          std::pair<double, double> range,
                                          const ScheduleSpec& spec, double initial_inside) {
  PlantConfig quiet = cfg;
  quiet.sensor_noise_sd = 0.0;
  quiet.validate();

  const double lo = range.first, hi = range.second;
  const double lo_hard = lo + 0.1, hi_hard = hi - 0.1;
  const double lo_sw = lo + spec.margin, hi_sw = hi - spec.margin;
  if (!(lo_sw < hi_sw)) throw std::invalid_argument("design_schedule: margin exceeds band");

  Rng rng(spec.seed);
  ThermalState state(initial_inside, quiet.ambient_at(0.0));
  double heat = 0.0;
  double t_now = 0.0;
  bool heating = state.t_inside < 0.5 * (lo_sw + hi_sw);
  int dwell = 0;
  double duty = spec.duties[rng.uniform_int(0, static_cast<int>(spec.duties.size()) - 1)];

  std::vector<ControlInput> schedule;
  schedule.reserve(spec.steps);

  // Fallback ladders used when the preferred action would leave the band.
  static const double kHeatLadder[] = {0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05, 0.0,
                                       0.6, 0.7, 0.8, 0.9, 1.0};
  static const double kBrakeLadder[] = {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5};

  // The heater lag keeps delivering power after the duty is cut, so a
  // candidate is acceptable only if coasting at zero input from its outcome
  // stays under the band top. Returns the violation (0 = feasible).
  auto violation_of = [&](const PlantStepResult& outcome, double t_at) {
    double v = 0.0;
    const double t1 = outcome.state.t_inside;
    if (t1 < lo_hard) v = std::max(v, lo_hard - t1);
    if (t1 > hi_hard) v = std::max(v, t1 - hi_hard);
    PlantStepResult coast = outcome;
    for (int ahead = 0; ahead < 4; ++ahead) {
      coast = plant_step(coast.state, ControlInput(0, 0), coast.delivered_heat, kDefaultDt,
                         quiet, t_at + ahead * kDefaultDt);
      if (coast.state.t_inside > hi_hard) v = std::max(v, coast.state.t_inside - hi_hard);
    }
    return v;
  };

  for (int k = 0; k < spec.steps; ++k) {
    if (state.t_inside >= hi_sw) heating = false;
    if (state.t_inside <= lo_sw) heating = true;
    if (--dwell <= 0) {
      duty = spec.duties[rng.uniform_int(0, static_cast<int>(spec.duties.size()) - 1)];
      dwell = rng.uniform_int(spec.dwell_min, spec.dwell_max);
    }

    std::vector<ControlInput> candidates;
    if (heating) {
      candidates.push_back(quantize_control(duty, 0));
      for (double d : kHeatLadder) candidates.push_back(quantize_control(d, 0));
      if (spec.allow_fan) candidates.push_back(quantize_control(0, 1));
    } else {
      if (spec.allow_fan) candidates.push_back(quantize_control(0, 1));
      for (double d : kBrakeLadder) candidates.push_back(quantize_control(d, 0));
    }

    ControlInput chosen(0, 0);
    PlantStepResult chosen_next{state, heat};
    double best_violation = std::numeric_limits<double>::infinity();
    for (const ControlInput& u : candidates) {
      const PlantStepResult next = plant_step(state, u, heat, kDefaultDt, quiet, t_now);
      const double v = violation_of(next, t_now + kDefaultDt);
      if (v < best_violation) {
        best_violation = v;
        chosen = u;
        chosen_next = next;
      }
      if (v == 0.0) break;  // candidates are listed in preference order
    }
    schedule.push_back(chosen);
    state = chosen_next.state;
    heat = chosen_next.delivered_heat;
    t_now += kDefaultDt;
  }
  return schedule;
}

Episode generate_episode(std::pair<double, double> range, const ScheduleSpec& spec,
                         const PlantConfig& cfg, std::uint64_t seed_offset) {
  ScheduleSpec sched = spec;
  sched.seed = Rng::mix(spec.seed, seed_offset);
  const double initial = 0.5 * (range.first + range.second);
  const std::vector<ControlInput> schedule = design_schedule(cfg, range, sched, initial);

  PlantConfig run_cfg = cfg;
  run_cfg.rng_seed = Rng::mix(cfg.rng_seed ^ sched.seed, 0x5eed);
  PlantSim sim(run_cfg, initial);

  Episode ep;
  ep.sensed.dt = kDefaultDt;
  ep.truth.dt = kDefaultDt;
  ep.sensed.samples.reserve(schedule.size());
  ep.truth.samples.reserve(schedule.size());
  for (const ControlInput& u : schedule) {
    ep.truth.samples.push_back(Sample{sim.truth(), u});
    ep.sensed.samples.push_back(Sample{sim.read_sensor(), u});
    sim.step(u, kDefaultDt);
  }
  return ep;
}

Trajectory generate_dataset(const ScenarioSpec& spec, const PlantConfig& cfg) {
  spec.validate();
  return generate_episode(spec.test_range, spec.test_schedule, cfg, 0).sensed;
}

Episode generate_test_episode(const ScenarioSpec& spec, const PlantConfig& cfg) {
  spec.validate();
  return generate_episode(spec.test_range, spec.test_schedule, cfg, 0);
}

std::vector<Trajectory> generate_training_set(const ScenarioSpec& spec, const PlantConfig& cfg) {
  spec.validate();
  std::vector<Trajectory> series;
  series.reserve(spec.train_series);
  for (int i = 0; i < spec.train_series; ++i) {
    series.push_back(
        generate_episode(spec.train_range, spec.train_schedule, cfg, static_cast<std::uint64_t>(i + 1))
            .sensed);
  }
  return series;
}

std::vector<Trajectory> generate_identification_set(std::pair<double, double> band,
                                                    const PlantConfig& cfg, int series,
                                                    int steps, std::uint64_t seed) {
  ScheduleSpec spec;
  spec.steps = steps;
  spec.duties = {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4};
  spec.allow_fan = true;
  spec.dwell_min = 1;
  spec.dwell_max = 3;
  spec.margin = 0.4;
  spec.seed = seed;
  std::vector<Trajectory> out;
  out.reserve(series);
  for (int i = 0; i < series; ++i) {
    out.push_back(generate_episode(band, spec, cfg, seed + 1000 + i).sensed);
  }
  return out;
}

}  // namespace twinbox::plant
