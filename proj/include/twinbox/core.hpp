#ifndef TWINBOX_CORE_HPP
#define TWINBOX_CORE_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace twinbox {

// Inside-temperature sanity band; states outside it are rejected everywhere.
inline constexpr double kTempBandLow = -20.0;
inline constexpr double kTempBandHigh = 80.0;

// Heater duty grid: multiples of 0.05, 21 admissible levels in [0, 1].
inline constexpr double kHeaterStep = 0.05;
inline constexpr int kHeaterLevels = 21;

// Sampling interval of the measurement chain, seconds.
inline constexpr double kDefaultDt = 60.0;

// Inside + ambient air temperature at one instant, degrees Celsius.
struct ThermalState {
  double t_inside;
  double t_ambient;

  ThermalState(double inside, double ambient);
};

// Heater duty cycle (exact multiple of 0.05 in [0,1]) and binary fan state.
// The constructor snaps values within 1e-9 of an admissible level onto it and
// rejects anything else, so an instance is valid by construction.
struct ControlInput {
  double heater_duty;
  int fan_on;

  ControlInput(double heater, int fan);

  double fan() const { return fan_on ? 1.0 : 0.0; }
  bool operator==(const ControlInput& o) const {
    return heater_duty == o.heater_duty && fan_on == o.fan_on;
  }
};

// Clamps the heater to [0,1], rounds it to the nearest 0.05 (ties up), and
// rounds the fan to the nearest of {0,1} (ties up).
ControlInput quantize_control(double raw_heater, double raw_fan);

// Physical constants of the enclosure. f_max is stored in m^3/s; use
// from_flow_per_hour for data sheets quoting m^3/h.
struct PlantParams {
  double h_max = 100.0;           // heater power, W
  double f_max = 68.0 / 3600.0;   // fan volumetric flow, m^3/s
  double volume = 0.15;           // enclosure volume, m^3
  double rho = 1.2;               // air density, kg/m^3
  double cp = 1005.0;             // specific heat of air, J/(kg K)

  // rho * V * cp, the lumped heat capacity in J/K.
  double heat_capacity() const { return rho * volume * cp; }

  void validate() const;

  static double flow_per_hour(double m3_per_h) { return m3_per_h / 3600.0; }
};

struct Sample {
  ThermalState state;
  ControlInput control;
};

// Fixed-step time series of (state, control) samples. The control stored at
// index k is the input applied over [k*dt, (k+1)*dt).
struct Trajectory {
  double dt = kDefaultDt;
  std::vector<Sample> samples;
};

// Throws std::invalid_argument when dt <= 0 or the trajectory is empty.
void validate_trajectory(const Trajectory& traj);

// One sliding-window training pair: `window` holds `lookback` consecutive
// samples, `target` is the state `horizon` steps past the window's end.
struct WindowPair {
  std::vector<Sample> window;
  ThermalState target;
};

struct WindowedDataset {
  int lookback = 10;
  int horizon = 1;
  double dt = kDefaultDt;
  double split_ratio = 0.8;
  std::vector<WindowPair> pairs;
};

// Overlapping stride-1 windows; yields n - lookback - horizon + 1 pairs.
WindowedDataset make_windows(const Trajectory& traj, int lookback = 10, int horizon = 1);

// Windows each trajectory independently (windows never span two series) and
// concatenates the pairs in input order.
WindowedDataset make_windows(const std::vector<Trajectory>& trajs, int lookback = 10,
                             int horizon = 1);

// Chronological split: first floor(ratio*n) pairs train, rest validation.
// Throws if either side would be empty.
std::pair<WindowedDataset, WindowedDataset> chrono_split(const WindowedDataset& ds,
                                                         double ratio = 0.8);

// CSV with header `t_seconds,t_inside,t_ambient,heater_duty,fan_on`.
void save_trajectory_csv(const Trajectory& traj, std::ostream& out);
void save_trajectory_csv(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory_csv(std::istream& in);
Trajectory load_trajectory_csv(const std::string& path);

// Lossless round-trip formatting for doubles ("%.17g").
std::string format_double(double v);

}  // namespace twinbox

#endif  // TWINBOX_CORE_HPP
