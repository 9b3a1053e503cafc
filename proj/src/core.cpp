#include "twinbox/core.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace twinbox {

namespace {

bool finite(double v) { return std::isfinite(v); }

}  // namespace

ThermalState::ThermalState(double inside, double ambient)
    : t_inside(inside), t_ambient(ambient) {
  if (!finite(inside) || !finite(ambient)) {
    throw std::domain_error("ThermalState: non-finite temperature");
  }
  if (inside < kTempBandLow || inside > kTempBandHigh) {
    throw std::domain_error("ThermalState: t_inside " + format_double(inside) +
                            " outside sanity band [-20, 80] C");
  }
}

ControlInput::ControlInput(double heater, int fan) : heater_duty(heater), fan_on(fan) {
  if (!finite(heater)) throw std::domain_error("ControlInput: non-finite heater duty");
  if (fan != 0 && fan != 1) throw std::domain_error("ControlInput: fan_on must be 0 or 1");
  const double level = std::floor(heater / kHeaterStep + 0.5);
  const double snapped = level * kHeaterStep;
  if (level < 0 || level > kHeaterLevels - 1 || std::abs(heater - snapped) > 1e-9) {
    throw std::domain_error("ControlInput: heater duty " + format_double(heater) +
                            " is not a multiple of 0.05 in [0, 1]");
  }
  heater_duty = snapped;
}

ControlInput quantize_control(double raw_heater, double raw_fan) {
  if (!finite(raw_heater) || !finite(raw_fan)) {
    throw std::domain_error("quantize_control: non-finite input");
  }
  double h = raw_heater;
  if (h < 0.0) h = 0.0;
  if (h > 1.0) h = 1.0;
  // floor(x + 0.5) rounds ties up on the 0.05 grid.
  const double level = std::floor(h / kHeaterStep + 0.5);
  const int fan = raw_fan >= 0.5 ? 1 : 0;
  return ControlInput(level * kHeaterStep, fan);
}

void PlantParams::validate() const {
  if (!(h_max > 0 && f_max > 0 && volume > 0 && rho > 0 && cp > 0)) {
    throw std::domain_error("PlantParams: all parameters must be strictly positive");
  }
}

void validate_trajectory(const Trajectory& traj) {
  if (!(traj.dt > 0)) throw std::invalid_argument("Trajectory: dt must be > 0");
  if (traj.samples.empty()) throw std::invalid_argument("Trajectory: empty");
}

WindowedDataset make_windows(const Trajectory& traj, int lookback, int horizon) {
  validate_trajectory(traj);
  if (lookback < 1 || horizon < 1) {
    throw std::invalid_argument("make_windows: lookback and horizon must be >= 1");
  }
  const int n = static_cast<int>(traj.samples.size());
  if (n < lookback + horizon) {
    throw std::invalid_argument("make_windows: trajectory of length " + std::to_string(n) +
                                " too short for lookback " + std::to_string(lookback) +
                                " + horizon " + std::to_string(horizon));
  }
  WindowedDataset ds;
  ds.lookback = lookback;
  ds.horizon = horizon;
  ds.dt = traj.dt;
  const int count = n - lookback - horizon + 1;
  ds.pairs.reserve(count);
  for (int start = 0; start < count; ++start) {
    WindowPair pair{std::vector<Sample>(traj.samples.begin() + start,
                                        traj.samples.begin() + start + lookback),
                    traj.samples[start + lookback + horizon - 1].state};
    ds.pairs.push_back(std::move(pair));
  }
  return ds;
}

WindowedDataset make_windows(const std::vector<Trajectory>& trajs, int lookback, int horizon) {
  if (trajs.empty()) throw std::invalid_argument("make_windows: no trajectories");
  WindowedDataset all = make_windows(trajs.front(), lookback, horizon);
  for (std::size_t i = 1; i < trajs.size(); ++i) {
    if (trajs[i].dt != all.dt) throw std::invalid_argument("make_windows: mixed dt");
    WindowedDataset ds = make_windows(trajs[i], lookback, horizon);
    all.pairs.insert(all.pairs.end(), std::make_move_iterator(ds.pairs.begin()),
                     std::make_move_iterator(ds.pairs.end()));
  }
  return all;
}

std::pair<WindowedDataset, WindowedDataset> chrono_split(const WindowedDataset& ds,
                                                         double ratio) {
  if (ds.pairs.empty()) throw std::invalid_argument("chrono_split: empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("chrono_split: ratio must be in (0, 1)");
  }
  const std::size_t n = ds.pairs.size();
  const std::size_t n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  if (n_train == 0) throw std::invalid_argument("chrono_split: empty training split");
  WindowedDataset train = ds;
  WindowedDataset val = ds;
  train.split_ratio = ratio;
  val.split_ratio = ratio;
  train.pairs.assign(ds.pairs.begin(), ds.pairs.begin() + n_train);
  val.pairs.assign(ds.pairs.begin() + n_train, ds.pairs.end());
  return {std::move(train), std::move(val)};
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void save_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  validate_trajectory(traj);
  out << "t_seconds,t_inside,t_ambient,heater_duty,fan_on\n";
  for (std::size_t k = 0; k < traj.samples.size(); ++k) {
    const Sample& s = traj.samples[k];
    out << format_double(static_cast<double>(k) * traj.dt) << ','
        << format_double(s.state.t_inside) << ',' << format_double(s.state.t_ambient) << ','
        << format_double(s.control.heater_duty) << ',' << s.control.fan_on << '\n';
  }
}

void save_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  save_trajectory_csv(traj, out);
}

Trajectory load_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trajectory CSV: empty file");
  if (line != "t_seconds,t_inside,t_ambient,heater_duty,fan_on") {
    throw std::runtime_error("trajectory CSV: unexpected header: " + line);
  }
  Trajectory traj;
  traj.samples.clear();
  double prev_t = 0.0;
  bool have_dt = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    double t, t_in, t_amb, heater;
    int fan;
    char c1, c2, c3, c4;
    if (!(ss >> t >> c1 >> t_in >> c2 >> t_amb >> c3 >> heater >> c4 >> fan) || c1 != ',' ||
        c2 != ',' || c3 != ',' || c4 != ',') {
      throw std::runtime_error("trajectory CSV: malformed row " + std::to_string(row));
    }
    if (row == 1) {
      traj.dt = t - prev_t;
      have_dt = true;
    } else if (row > 1 && have_dt) {
      if (std::abs((t - prev_t) - traj.dt) > 1e-9 * std::max(1.0, traj.dt)) {
        throw std::runtime_error("trajectory CSV: non-uniform dt at row " + std::to_string(row));
      }
    }
    prev_t = t;
    traj.samples.push_back(Sample{ThermalState(t_in, t_amb), ControlInput(heater, fan)});
    ++row;
  }
  validate_trajectory(traj);
  return traj;
}

Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return load_trajectory_csv(in);
}

}  // namespace twinbox
