#ifndef TWINBOX_CLOSED_LOOP_HPP
#define TWINBOX_CLOSED_LOOP_HPP

#include "twinbox/core.hpp"
#include "twinbox/dqn.hpp"
#include "twinbox/llm.hpp"
#include "twinbox/mpc.hpp"
#include "twinbox/plant.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace twinbox::control {

// Reference temperature profile over episode steps.
struct ReferenceProfile {
  std::string name;
  std::function<double(int)> at;
};

ReferenceProfile constant_reference(double value);
ReferenceProfile ramp_reference(double from, double to, int steps);
ReferenceProfile staircase_reference(std::vector<double> levels, int dwell);
ReferenceProfile sine_reference(double mean, double amplitude, int period_steps);

// Named profile specs: "constant:26", "ramp:24,30,240",
// "staircase:26,28,27,29@60", "sine:27,2,120".
ReferenceProfile make_reference(const std::string& spec);

// What a controller sees each step: the sensed current state, the current
// reference and the measured episode history (newest sample last; its
// control slot is the previous input and is replaced once a decision lands).
struct StepContext {
  int step;
  double dt;
  double t_ref;
  ThermalState measured;
  std::span<const Sample> history;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  // Number of history samples the controller needs before its first decision.
  virtual int min_history() const { return 1; }
  virtual ControlInput decide(const StepContext& ctx) = 0;
  virtual std::string last_rationale() const { return {}; }
  // Controller-specific decision score (cost for the optimizer, value
  // estimate for the learner); logged per step.
  virtual double last_score() const { return 0.0; }
};

struct EpisodeConfig {
  int steps = 240;
  int warmup_steps = 10;  // zero-input sensing steps before control starts
  double dt = kDefaultDt;
};

struct EpisodeResult {
  std::string controller;
  std::string profile;
  Trajectory sensed;  // warmup + controlled samples, telemetry order
  Trajectory truth;
  std::vector<double> refs;
  std::vector<double> scores;
  std::vector<std::string> rationales;
  int warmup_steps = 0;
  double mae = 0.0;  // measured vs reference over controlled steps
  double actuation_heater = 0.0;
  double actuation_fan = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

// Sense -> decide -> actuate at the sampling interval. The controller sees
// only noisy readings; a controller exception aborts the episode but the
// telemetry gathered so far is preserved in the result.
EpisodeResult run_closed_loop(Controller& controller, plant::PlantSim& sim,
                              const ReferenceProfile& reference, const EpisodeConfig& cfg);

// Telemetry CSV: t,T_ref,T_meas,heater_duty,fan_on,reward_or_cost,rationale.
void write_telemetry_csv(const EpisodeResult& result, std::ostream& out);
void write_telemetry_csv(const EpisodeResult& result, const std::string& path);

// --------------------------------------------------------------------------- controllers

class MpcController : public Controller {
 public:
  MpcController(MpcConfig cfg, std::string name = "mpc");
  std::string name() const override { return name_; }
  int min_history() const override;
  ControlInput decide(const StepContext& ctx) override;
  double last_score() const override { return last_cost_; }
  int nonconverged_solves() const { return nonconverged_; }

 private:
  MpcConfig cfg_;
  std::string name_;
  Eigen::VectorXd warm_;
  bool have_warm_ = false;
  double last_cost_ = 0.0;
  int nonconverged_ = 0;
};

class DqnController : public Controller {
 public:
  DqnController(std::shared_ptr<const DqnAgent> agent, std::string name = "rl");
  std::string name() const override { return name_; }
  ControlInput decide(const StepContext& ctx) override;
  double last_score() const override { return last_q_; }

 private:
  std::shared_ptr<const DqnAgent> agent_;
  std::string name_;
  double last_q_ = 0.0;
};

class LlmController : public Controller {
 public:
  LlmController(LlmControllerConfig cfg, std::string name = "llm");
  std::string name() const override { return name_; }
  int min_history() const override;
  ControlInput decide(const StepContext& ctx) override;
  std::string last_rationale() const override { return last_rationale_; }

 private:
  LlmControllerConfig cfg_;
  std::string name_;
  HistoryStore store_;
  std::size_t ingested_ = 0;
  std::string last_rationale_;
};

}  // namespace twinbox::control

#endif  // TWINBOX_CLOSED_LOOP_HPP
