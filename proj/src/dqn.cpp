#include "twinbox/dqn.hpp"

#include "twinbox/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace twinbox::control {

using nnet::Mat;
using nnet::Vec;

void RlConfig::validate() const {
  if (!(gamma > 0 && gamma <= 1)) throw std::invalid_argument("RlConfig: gamma must be in (0,1]");
  if (reward.lambda1 < 0 || reward.lambda2 < 0 || reward.lambda0f < 0 || reward.lambda0h < 0) {
    throw std::invalid_argument("RlConfig: reward weights must be >= 0");
  }
  if (offline_steps < 0 || online_steps < 0 || offline_steps + online_steps < 1) {
    throw std::invalid_argument("RlConfig: no training steps");
  }
  if (replay_capacity < batch_size || batch_size < 1 || target_sync < 1 || episode_len < 1) {
    throw std::invalid_argument("RlConfig: bad replay/batch/sync/episode settings");
  }
}

ControlInput action_from_index(int index) {
  if (index < 0 || index >= kActionCount) {
    throw std::invalid_argument("action_from_index: out of range");
  }
  const int fan = index / kHeaterLevels;
  const int level = index % kHeaterLevels;
  return ControlInput(level * kHeaterStep, fan);
}

int index_from_action(const ControlInput& u) {
  const int level = static_cast<int>(std::floor(u.heater_duty / kHeaterStep + 0.5));
  return u.fan_on * kHeaterLevels + level;
}

// --------------------------------------------------------------------------- envs

TwinEnv::TwinEnv(const models::Predictor& model, EnvConfig cfg, double t_ambient)
    : model_(model), cfg_(cfg), t_ambient_(t_ambient) {}

Observation TwinEnv::reset(Rng& rng) {
  const double t0 = rng.uniform(cfg_.init_range.first, cfg_.init_range.second);
  t_ref_ = rng.uniform(cfg_.ref_range.first, cfg_.ref_range.second);
  step_count_ = 0;
  window_.assign(model_.lookback(), Sample{ThermalState(t0, t_ambient_), ControlInput(0, 0)});
  return {t0, t_ambient_, t_ref_};
}

Env::StepResult TwinEnv::step(const ControlInput& u) {
  if (window_.empty()) throw std::logic_error("TwinEnv: step before reset");
  ThermalState next(t_ambient_, t_ambient_);
  bool out_of_band = false;
  try {
    next = model_.predict_step(window_, u);
  } catch (const std::domain_error&) {
    // Prediction left the sanity band; pin to the nearer edge and truncate.
    out_of_band = true;
    next = ThermalState(window_.back().state.t_inside > t_ambient_ ? kTempBandHigh
                                                                   : kTempBandLow,
                        t_ambient_);
  }
  window_.back().control = u;
  window_.erase(window_.begin());
  window_.push_back(Sample{next, u});
  ++step_count_;
  const double reward = cfg_.reward(next.t_inside, t_ref_, u);
  const bool unsafe = out_of_band || next.t_inside < cfg_.safety_band.first ||
                      next.t_inside > cfg_.safety_band.second;
  return {{next.t_inside, t_ambient_, t_ref_}, reward, unsafe || step_count_ >= cfg_.episode_len};
}

PlantEnv::PlantEnv(plant::PlantConfig cfg, EnvConfig env_cfg)
    : plant_cfg_(cfg), cfg_(env_cfg) {}

Observation PlantEnv::reset(Rng& rng) {
  const double t0 = rng.uniform(cfg_.init_range.first, cfg_.init_range.second);
  t_ref_ = rng.uniform(cfg_.ref_range.first, cfg_.ref_range.second);
  step_count_ = 0;
  plant::PlantConfig cfg = plant_cfg_;
  cfg.rng_seed = rng.next_u64();
  sim_ = std::make_unique<plant::PlantSim>(cfg, t0);
  const ThermalState measured = sim_->read_sensor();
  return {measured.t_inside, measured.t_ambient, t_ref_};
}

Env::StepResult PlantEnv::step(const ControlInput& u) {
  if (sim_ == nullptr) throw std::logic_error("PlantEnv: step before reset");
  sim_->step(u, cfg_.dt);
  const ThermalState measured = sim_->read_sensor();
  ++step_count_;
  const double reward = cfg_.reward(measured.t_inside, t_ref_, u);
  const bool unsafe = measured.t_inside < cfg_.safety_band.first ||
                      measured.t_inside > cfg_.safety_band.second;
  return {{measured.t_inside, measured.t_ambient, t_ref_},
          reward,
          unsafe || step_count_ >= cfg_.episode_len};
}

// --------------------------------------------------------------------------- agent

namespace {
// Fixed affine observation scaling; keeps the policy checkpoint free of
// dataset statistics.
inline double scale_temp(double t) { return (t - 25.0) / 10.0; }
}  // namespace

DqnAgent::DqnAgent(int hidden, std::uint64_t seed) : net_(3, hidden, kActionCount, 0.0, seed) {}

Mat DqnAgent::encode(const Observation& obs) {
  Mat x(3, 1);
  x << scale_temp(obs.t_inside), scale_temp(obs.t_ambient), scale_temp(obs.t_ref);
  return x;
}

Vec DqnAgent::q_values(const Observation& obs) const {
  return net_.forward(encode(obs), false);
}

int DqnAgent::act_index(const Observation& obs) const {
  const Vec q = q_values(obs);
  int best = 0;
  for (int a = 1; a < kActionCount; ++a) {
    if (q[a] > q[best]) best = a;  // strict: ties keep the lowest index
  }
  return best;
}

ControlInput DqnAgent::act(const Observation& obs) const {
  return action_from_index(act_index(obs));
}

void DqnAgent::save(std::ostream& out) const {
  ckpt::Writer w(out, "dqn");
  w.meta("hidden", static_cast<int>(net_.params()[0].value.size() / 3));
  for (const auto& p : net_.params()) {
    Mat flat = p.value;
    w.tensor(p.name, flat);
  }
}

DqnAgent DqnAgent::load(std::istream& in) {
  ckpt::Reader reader(in);
  if (reader.kind() != "dqn") throw std::runtime_error("DqnAgent: not a dqn checkpoint");
  DqnAgent agent(reader.meta_int("hidden"), 0);
  for (auto& p : agent.net_.params()) {
    const Mat& t = reader.tensor(p.name);
    if (t.size() != p.value.size()) {
      throw std::runtime_error("dqn checkpoint: shape mismatch for " + p.name);
    }
    p.value = Eigen::Map<const Vec>(t.data(), t.size());
  }
  return agent;
}

std::size_t DqnAgent::checkpoint_bytes() const {
  std::ostringstream ss;
  save(ss);
  return ss.str().size();
}

ControlInput dqn_act(const DqnAgent& agent, const ThermalState& x, double x_ref) {
  return agent.act({x.t_inside, x.t_ambient, x_ref});
}

// --------------------------------------------------------------------------- training

namespace {

struct Transition {
  std::array<double, 3> s;
  int a;
  double r;
  std::array<double, 3> s2;
};

std::array<double, 3> pack(const Observation& o) { return {o.t_inside, o.t_ambient, o.t_ref}; }

Mat encode_batch(const std::vector<Transition>& replay, const std::vector<int>& idx,
                 bool next_state) {
  Mat x(3, idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const auto& s = next_state ? replay[idx[c]].s2 : replay[idx[c]].s;
    x(0, c) = scale_temp(s[0]);
    x(1, c) = scale_temp(s[1]);
    x(2, c) = scale_temp(s[2]);
  }
  return x;
}

void train_phase(nnet::MlpNet& net, nnet::MlpNet& target, nnet::Adam& opt,
                 std::vector<Transition>& replay, std::size_t& replay_next, Env& env,
                 const RlConfig& cfg, int steps, int step_offset, int total_steps, Rng& rng,
                 DqnTrainStats* stats) {
  if (steps <= 0) return;
  Observation obs = env.reset(rng);
  double episode_return = 0.0;
  const int anneal_steps = std::max(1, static_cast<int>(cfg.eps_fraction * total_steps));

  for (int k = 0; k < steps; ++k) {
    const int global_step = step_offset + k;
    const double frac = std::min(1.0, static_cast<double>(global_step) / anneal_steps);
    const double eps = cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start);

    int action;
    if (rng.uniform() < eps) {
      action = rng.uniform_int(0, kActionCount - 1);
    } else {
      const Vec q = net.forward(DqnAgent::encode(obs), false);
      action = 0;
      for (int a = 1; a < kActionCount; ++a) {
        if (q[a] > q[action]) action = a;
      }
    }

    const Env::StepResult result = env.step(action_from_index(action));
    episode_return += result.reward;

    const Transition tr{pack(obs), action, result.reward, pack(result.obs)};
    if (replay.size() < static_cast<std::size_t>(cfg.replay_capacity)) {
      replay.push_back(tr);
    } else {
      replay[replay_next] = tr;
      replay_next = (replay_next + 1) % replay.size();
    }

    if (result.truncated) {
      if (stats != nullptr) {
        stats->episode_returns.push_back(episode_return);
        ++stats->episodes;
      }
      episode_return = 0.0;
      obs = env.reset(rng);
    } else {
      obs = result.obs;
    }

    if (replay.size() >= static_cast<std::size_t>(std::max(cfg.warmup_steps, cfg.batch_size))) {
      std::vector<int> idx(cfg.batch_size);
      for (int& i : idx) i = rng.uniform_int(0, static_cast<int>(replay.size()) - 1);

      // Bootstrapped targets from the frozen network. Episode ends here are
      // time-limit or safety truncations of a continuing task, so the value
      // bootstrap is kept.
      const Mat x2 = encode_batch(replay, idx, true);
      const Mat q2 = target.forward(x2, false);
      Vec targets(cfg.batch_size);
      for (int c = 0; c < cfg.batch_size; ++c) {
        targets[c] = replay[idx[c]].r + cfg.gamma * q2.col(c).maxCoeff();
      }

      const Mat x = encode_batch(replay, idx, false);
      const Mat q = net.forward(x, false);
      const double q_extreme = std::max(std::abs(q.maxCoeff()), std::abs(q.minCoeff()));
      if (q_extreme > 1e6) {
        throw std::runtime_error(
            "dqn_train: diverged at step " + std::to_string(global_step) +
            ", |Q| = " + std::to_string(q_extreme) + "; lower the learning rate");
      }

      // MSE on the taken actions only.
      Mat dq = Mat::Zero(q.rows(), q.cols());
      for (int c = 0; c < cfg.batch_size; ++c) {
        const int a = replay[idx[c]].a;
        dq(a, c) = 2.0 * (q(a, c) - targets[c]) / cfg.batch_size;
      }
      net.zero_grad();
      net.backward(dq);
      auto params = net.params();
      opt.step(params);
    }

    if ((global_step + 1) % cfg.target_sync == 0) {
      target = net;
    }
    if (stats != nullptr) stats->steps = global_step + 1;
  }
}

}  // namespace

DqnAgent dqn_train(const RlConfig& cfg, Env& env, DqnTrainStats* stats) {
  RlConfig offline_only = cfg;
  offline_only.online_steps = 0;
  return dqn_train_offline_online(offline_only, env, nullptr, stats);
}

DqnAgent dqn_train_offline_online(const RlConfig& cfg, Env& twin, Env* plant_env,
                                  DqnTrainStats* stats) {
  cfg.validate();
  if (cfg.online_steps > 0 && plant_env == nullptr) {
    throw std::invalid_argument("dqn_train: online steps requested without a plant env");
  }

  Rng rng(cfg.seed);
  DqnAgent agent(cfg.hidden, Rng::mix(cfg.seed, 0xd9));
  nnet::MlpNet target = agent.net();
  nnet::Adam opt(cfg.learning_rate);

  std::vector<Transition> replay;
  replay.reserve(std::min(cfg.replay_capacity, 1 << 20));
  std::size_t replay_next = 0;
  const int total = cfg.offline_steps + cfg.online_steps;

  train_phase(agent.net(), target, opt, replay, replay_next, twin, cfg, cfg.offline_steps, 0,
              total, rng, stats);
  if (cfg.online_steps > 0) {
    train_phase(agent.net(), target, opt, replay, replay_next, *plant_env, cfg,
                cfg.online_steps, cfg.offline_steps, total, rng, stats);
  }
  return agent;
}

}  // namespace twinbox::control
