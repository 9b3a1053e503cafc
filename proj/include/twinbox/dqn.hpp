#ifndef TWINBOX_DQN_HPP
#define TWINBOX_DQN_HPP

#include "twinbox/core.hpp"
#include "twinbox/models.hpp"
#include "twinbox/nnet.hpp"
#include "twinbox/plant.hpp"
#include "twinbox/rng.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace twinbox::control {

// Reward of Eq.-17 shape: -l2*e^2 - l1*|e| - l0f*|uf| - l0h*|uh|.
struct RewardWeights {
  double lambda2 = 0.5;
  double lambda1 = 1.0;
  double lambda0f = 0.0;
  double lambda0h = 0.0;

  double operator()(double x, double x_ref, const ControlInput& u) const {
    const double e = x - x_ref;
    return -lambda2 * e * e - lambda1 * std::abs(e) - lambda0f * u.fan() -
           lambda0h * u.heater_duty;
  }

  // Table presets: penalized and unpenalized offline training.
  static RewardWeights off_penalty() { return {0.5, 1.0, 0.5, 0.1}; }
  static RewardWeights off() { return {0.5, 1.0, 0.0, 0.0}; }
};

struct RlConfig {
  RewardWeights reward;
  double gamma = 0.99;
  int offline_steps = 100000;
  int online_steps = 0;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_fraction = 0.3;  // of total steps spent annealing
  int replay_capacity = 50000;
  int batch_size = 64;
  int target_sync = 1000;
  int warmup_steps = 1000;
  double learning_rate = 1e-3;
  int hidden = 64;
  int episode_len = 240;
  std::uint64_t seed = 0;

  void validate() const;
};

// 42-action grid: index = fan*21 + heater_level, so argmax tie-breaking by
// lowest index prefers fan off and lower duty.
inline constexpr int kActionCount = 2 * kHeaterLevels;

ControlInput action_from_index(int index);
int index_from_action(const ControlInput& u);

struct Observation {
  double t_inside;
  double t_ambient;
  double t_ref;
};

// Training environment: reset draws a fresh episode (initial state and
// reference), step applies an action and returns the next observation and
// its reward. `truncated` flags episode ends (time limit or safety exit).
class Env {
 public:
  virtual ~Env() = default;
  struct StepResult {
    Observation obs;
    double reward;
    bool truncated;
  };
  virtual Observation reset(Rng& rng) = 0;
  virtual StepResult step(const ControlInput& u) = 0;
};

struct EnvConfig {
  std::pair<double, double> ref_range{24.0, 30.0};
  std::pair<double, double> init_range{22.0, 32.0};
  // Training-time safety band; exceeding it truncates the episode.
  std::pair<double, double> safety_band{5.0, 60.0};
  int episode_len = 240;
  double dt = kDefaultDt;
  RewardWeights reward;
};

// Digital-twin environment: the next state comes from a predictive model fed
// back on its own outputs.
class TwinEnv : public Env {
 public:
  TwinEnv(const models::Predictor& model, EnvConfig cfg, double t_ambient = 22.0);
  Observation reset(Rng& rng) override;
  StepResult step(const ControlInput& u) override;

 private:
  const models::Predictor& model_;
  EnvConfig cfg_;
  double t_ambient_;
  std::vector<Sample> window_;
  double t_ref_ = 26.0;
  int step_count_ = 0;
};

// The mismatched plant itself; the agent observes noisy readings.
class PlantEnv : public Env {
 public:
  PlantEnv(plant::PlantConfig cfg, EnvConfig env_cfg);
  Observation reset(Rng& rng) override;
  StepResult step(const ControlInput& u) override;

 private:
  plant::PlantConfig plant_cfg_;
  EnvConfig cfg_;
  std::unique_ptr<plant::PlantSim> sim_;
  double t_ref_ = 26.0;
  int step_count_ = 0;
};

// Greedy policy over the learned action values.
class DqnAgent {
 public:
  DqnAgent(int hidden, std::uint64_t seed);

  int act_index(const Observation& obs) const;
  ControlInput act(const Observation& obs) const;
  nnet::Vec q_values(const Observation& obs) const;

  nnet::MlpNet& net() { return net_; }
  const nnet::MlpNet& net() const { return net_; }

  void save(std::ostream& out) const;
  static DqnAgent load(std::istream& in);
  std::size_t checkpoint_bytes() const;

  static nnet::Mat encode(const Observation& obs);

 private:
  mutable nnet::MlpNet net_;
};

ControlInput dqn_act(const DqnAgent& agent, const ThermalState& x, double x_ref);

struct DqnTrainStats {
  std::vector<double> episode_returns;
  int steps = 0;
  int episodes = 0;
};

// Seeded-deterministic Q-learning with replay buffer and a periodically
// synced target network. Aborts with diagnostics if the value estimates
// diverge (|Q| > 1e6).
DqnAgent dqn_train(const RlConfig& cfg, Env& env, DqnTrainStats* stats = nullptr);

// Offline phase in `twin`, then optional continued online phase on `plant_env`
// (cfg.online_steps > 0). The paper-style split behind RL-Off / RL-Tr.
DqnAgent dqn_train_offline_online(const RlConfig& cfg, Env& twin, Env* plant_env,
                                  DqnTrainStats* stats = nullptr);

}  // namespace twinbox::control

#endif  // TWINBOX_DQN_HPP
