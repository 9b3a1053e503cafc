#include "twinbox/closed_loop.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace twinbox;
using namespace twinbox::control;

namespace {

// Stable one-step model with passive decay toward 0 plus input authority;
// handy for exact MPC reasoning.
models::ArxModel toy_arx() {
  models::ArxModel m;
  m.a = (Eigen::VectorXd(2) << 0.6, 0.1).finished();
  m.b_h = (Eigen::VectorXd(2) << 8.0, 2.0).finished();
  m.b_f = (Eigen::VectorXd(2) << -3.0, -1.0).finished();
  return m;
}

std::vector<Sample> steady_history(int n, double t, const ControlInput& u) {
  return std::vector<Sample>(n, Sample{ThermalState(t, 22.0), u});
}

models::ArxModel plant_identified_arx(const plant::PlantConfig& cfg, int series = 6,
                                      std::uint64_t seed = 17) {
  plant::PlantConfig gen = cfg;
  gen.rng_seed = seed;
  const auto sets = plant::generate_identification_set({22.0, 32.0}, gen, series, 212, 301);
  return models::fit_arx(make_windows(sets, 10, 1));
}

}  // namespace

TEST_CASE("stage cost arithmetic matches the quadratic form") {
  MpcConfig cfg;
  cfg.model = toy_arx();
  cfg.w_t = 10.0;
  cfg.w_uh = 1.0;
  cfg.w_uf = 1.0;
  // Deviation 2, u = (1,1): 10*4 + 1 + 1 = 42.
  CHECK(mpc_stage_cost(cfg, 25.0, 27.0, 1.0, 1.0) == doctest::Approx(42.0).epsilon(1e-15));
  CHECK(mpc_stage_cost(cfg, 27.0, 27.0, 0.0, 0.0) == 0.0);
}

TEST_CASE("at the reference with a do-nothing equilibrium the MPC rests") {
  // Equilibrium model: x stays exactly when u = 0.
  models::ArxModel m;
  m.a = (Eigen::VectorXd(1) << 1.0).finished();
  m.b_h = (Eigen::VectorXd(1) << 5.0).finished();
  m.b_f = (Eigen::VectorXd(1) << -5.0).finished();
  MpcConfig cfg;
  cfg.model = m;
  cfg.horizon = 6;
  const auto hist = steady_history(1, 26.0, ControlInput(0, 0));
  const MpcSolution sol = mpc_step(cfg, hist, 26.0);
  CHECK(sol.u == ControlInput(0, 0));
  CHECK(sol.cost < 1e-10);
  CHECK(sol.converged);
}

TEST_CASE("horizon-1 MPC matches exhaustive enumeration over the action grid") {
  MpcConfig cfg;
  cfg.model = toy_arx();
  cfg.horizon = 1;
  cfg.w_uh = 1.0;
  cfg.w_uf = 1.0;

  Rng rng(88);
  for (int trial = 0; trial < 20; ++trial) {
    const double t = rng.uniform(20.0, 32.0);
    const double ref = rng.uniform(22.0, 30.0);
    const auto hist = steady_history(2, t, quantize_control(rng.uniform(), 0));

    double best_cost = 1e18;
    for (int a = 0; a < kActionCount; ++a) {
      const ControlInput u = action_from_index(a);
      Eigen::VectorXd x_hist(2);
      x_hist << t, t;
      Eigen::VectorXd uh_hist(1), uf_hist(1);
      uh_hist << hist.back().control.heater_duty;
      uf_hist << hist.back().control.fan();
      Eigen::VectorXd uv(2);
      uv << u.heater_duty, u.fan();
      const double x1 = cfg.model.simulate(x_hist, uh_hist, uf_hist, uv, 1)[0];
      best_cost = std::min(best_cost, mpc_stage_cost(cfg, x1, ref, u.heater_duty, u.fan()));
    }

    const MpcSolution sol = mpc_step(cfg, hist, ref);
    CHECK(sol.cost <= best_cost + 1e-9);
  }
}

TEST_CASE("mpc_step validates history length") {
  MpcConfig cfg;
  cfg.model = toy_arx();
  const auto hist = steady_history(1, 25.0, ControlInput(0, 0));
  CHECK_THROWS_AS(mpc_step(cfg, hist, 26.0), std::invalid_argument);
}

TEST_CASE("reward arithmetic of the table presets") {
  const RewardWeights penalized = RewardWeights::off_penalty();
  // Error 2 C, fan on, heater 0.5: -0.5*4 - 1*2 - 0.5*1 - 0.1*0.5 = -4.55.
  CHECK(penalized(28.0, 26.0, ControlInput(0.5, 1)) == doctest::Approx(-4.55).epsilon(1e-15));
  CHECK(penalized(26.0, 26.0, ControlInput(0, 0)) == 0.0);

  // Zero error and zero input maximize the reward over the whole grid.
  for (int a = 0; a < kActionCount; ++a) {
    const ControlInput u = action_from_index(a);
    for (double e : {-3.0, -0.5, 0.0, 0.5, 3.0}) {
      CHECK(penalized(26.0 + e, 26.0, u) <= 0.0);
    }
  }
}

TEST_CASE("greedy action selection: planted maximum and shift invariance") {
  DqnAgent agent(8, 42);
  // Zero all weights, then plant a single maximal output bias.
  for (auto& p : agent.net().params()) p.value.setZero();
  auto params = agent.net().params();
  // l3.bias is the last block.
  auto& bias = params.back();
  bias.value[17] = 3.5;
  const Observation obs{25.0, 22.0, 27.0};
  CHECK(agent.act_index(obs) == 17);
  CHECK(agent.act(obs) == action_from_index(17));

  // Adding a constant to every output leaves the argmax unchanged.
  bias.value.array() += 11.0;
  CHECK(agent.act_index(obs) == 17);

  // Exact ties resolve to the lowest index.
  bias.value.setZero();
  bias.value[5] = 2.0;
  bias.value[30] = 2.0;
  CHECK(agent.act_index(obs) == 5);
}

TEST_CASE("action index mapping is a bijection") {
  for (int a = 0; a < kActionCount; ++a) {
    CHECK(index_from_action(action_from_index(a)) == a);
  }
  CHECK(action_from_index(0) == ControlInput(0, 0));
  CHECK(action_from_index(kActionCount - 1) == ControlInput(1.0, 1));
}

namespace {

// Action directly sets the temperature; the tractable MDP for dqn_train.
class DirectEnv : public Env {
 public:
  explicit DirectEnv(RewardWeights reward) : reward_(reward) {}
  Observation reset(Rng& rng) override {
    t_ = rng.uniform(21.0, 33.0);
    steps_ = 0;
    return {t_, 22.0, kRef};
  }
  StepResult step(const ControlInput& u) override {
    t_ = 21.0 + 12.0 * u.heater_duty - 1.0 * u.fan();
    ++steps_;
    return {{t_, 22.0, kRef}, reward_(t_, kRef, u), steps_ >= 40};
  }
  static constexpr double kRef = 26.2;
  RewardWeights reward_;
  double t_ = 25.0;
  int steps_ = 0;
};

}  // namespace

TEST_CASE("dqn learns the tractable direct-control task") {
  RlConfig cfg;
  cfg.reward = RewardWeights::off();
  cfg.offline_steps = 6000;
  cfg.warmup_steps = 200;
  cfg.eps_fraction = 0.5;
  cfg.target_sync = 250;
  cfg.episode_len = 40;
  cfg.seed = 11;

  DirectEnv env(cfg.reward);
  DqnTrainStats stats;
  const DqnAgent agent = dqn_train(cfg, env, &stats);
  CHECK(stats.episodes > 100);

  // Enumerate the true per-step optimum of the stationary MDP.
  double best_reward = -1e18;
  for (int a = 0; a < kActionCount; ++a) {
    const ControlInput u = action_from_index(a);
    const double t_next = 21.0 + 12.0 * u.heater_duty - 1.0 * u.fan();
    best_reward = std::max(best_reward, cfg.reward(t_next, DirectEnv::kRef, u));
  }

  // Greedy policy reward from a few start states; within 5% of the optimum.
  for (double t0 : {22.0, 25.0, 29.0, 32.0}) {
    const ControlInput u = agent.act({t0, 22.0, DirectEnv::kRef});
    const double t_next = 21.0 + 12.0 * u.heater_duty - 1.0 * u.fan();
    const double r = cfg.reward(t_next, DirectEnv::kRef, u);
    CHECK(std::abs(best_reward - r) <= 0.05 * std::abs(best_reward));
  }
}

TEST_CASE("dqn training is seeded-deterministic") {
  auto run = [] {
    RlConfig cfg;
    cfg.offline_steps = 700;
    cfg.warmup_steps = 100;
    cfg.episode_len = 40;
    cfg.seed = 9;
    DirectEnv env(cfg.reward);
    DqnAgent agent = dqn_train(cfg, env);
    std::ostringstream ss;
    agent.save(ss);
    return ss.str();
  };
  CHECK(run() == run());
}

TEST_CASE("dqn checkpoint round-trips the greedy policy") {
  RlConfig cfg;
  cfg.offline_steps = 500;
  cfg.warmup_steps = 100;
  cfg.episode_len = 40;
  cfg.seed = 3;
  DirectEnv env(cfg.reward);
  const DqnAgent agent = dqn_train(cfg, env);
  std::stringstream ss;
  agent.save(ss);
  const DqnAgent loaded = DqnAgent::load(ss);
  for (double t0 : {21.0, 24.0, 27.5, 31.0}) {
    CHECK(loaded.act_index({t0, 22.0, 26.0}) == agent.act_index({t0, 22.0, 26.0}));
  }
  CHECK(dqn_act(agent, ThermalState(24.0, 22.0), 26.0) ==
        agent.act({24.0, 22.0, 26.0}));
}

TEST_CASE("twin env steps a predictor and truncates on the safety band") {
  models::HamPredictor ham{PlantParams{}};
  ham.zero_residual();
  EnvConfig env_cfg;
  env_cfg.episode_len = 5;
  env_cfg.safety_band = {5.0, 40.0};
  TwinEnv env(ham, env_cfg);
  Rng rng(2);
  const Observation obs = env.reset(rng);
  CHECK(obs.t_ambient == 22.0);

  // Full heat with no losses blows past the safety band and truncates.
  bool truncated = false;
  for (int k = 0; k < 5 && !truncated; ++k) {
    truncated = env.step(ControlInput(1.0, 0)).truncated;
  }
  CHECK(truncated);
}

// --------------------------------------------------------------------------- closed loop

namespace {

class ConstantController : public Controller {
 public:
  explicit ConstantController(ControlInput u) : u_(u) {}
  std::string name() const override { return "constant"; }
  ControlInput decide(const StepContext&) override { return u_; }

 private:
  ControlInput u_;
};

class ThrowingController : public Controller {
 public:
  std::string name() const override { return "throwing"; }
  ControlInput decide(const StepContext& ctx) override {
    if (ctx.step >= 7) throw std::runtime_error("deliberate failure");
    return ControlInput(0.1, 0);
  }
};

}  // namespace

TEST_CASE("zero-noise plant at ambient with an idle controller has zero MAE") {
  plant::PlantConfig cfg;
  cfg.sensor_noise_sd = 0.0;
  plant::PlantSim sim(cfg, cfg.ambient);
  ConstantController idle(ControlInput(0, 0));
  EpisodeConfig ep;
  ep.steps = 30;
  const EpisodeResult result =
      run_closed_loop(idle, sim, constant_reference(cfg.ambient), ep);
  CHECK(!result.aborted);
  CHECK(result.mae == 0.0);
  CHECK(result.actuation_heater == 0.0);
}

TEST_CASE("controller exceptions abort the episode but keep telemetry") {
  plant::PlantConfig cfg;
  plant::PlantSim sim(cfg, 25.0);
  ThrowingController bad;
  EpisodeConfig ep;
  ep.steps = 50;
  ep.warmup_steps = 2;
  const EpisodeResult result = run_closed_loop(bad, sim, constant_reference(26), ep);
  CHECK(result.aborted);
  CHECK(result.abort_reason == "deliberate failure");
  // 2 warmup + 7 controlled rows survived.
  CHECK(result.sensed.samples.size() == 9);
  std::ostringstream ss;
  write_telemetry_csv(result, ss);
  CHECK(ss.str().find("deliberate") == std::string::npos);  // reason is not a row
  CHECK(ss.str().find("warmup") != std::string::npos);
}

TEST_CASE("identified MPC tracks a staircase within the sensor band") {
  plant::PlantConfig cfg;
  cfg.rng_seed = 5;
  const models::ArxModel arx = plant_identified_arx(cfg);

  MpcController mpc(MpcConfig::preset(arx, false));
  plant::PlantSim sim(cfg, cfg.ambient);
  EpisodeConfig ep;
  ep.steps = 120;
  const ReferenceProfile ref = make_reference("staircase:26,28,27,29@30");
  const EpisodeResult result = run_closed_loop(mpc, sim, ref, ep);

  CHECK(!result.aborted);
  CHECK(result.mae < 0.5);
  // The designed fallback (best iterate + flag) may fire on a few chattering
  // solves; it must stay rare.
  CHECK(mpc.nonconverged_solves() <= 6);
  // Every emitted control satisfies the grid invariants.
  for (const auto& s : result.sensed.samples) {
    const double level = s.control.heater_duty / kHeaterStep;
    CHECK(std::abs(level - std::round(level)) < 1e-9);
    CHECK((s.control.fan_on == 0 || s.control.fan_on == 1));
  }
}

TEST_CASE("actuation penalty reduces total actuation on paired seeds") {
  plant::PlantConfig cfg;
  cfg.rng_seed = 6;
  const models::ArxModel arx = plant_identified_arx(cfg);
  const ReferenceProfile ref = make_reference("staircase:26,29,26.5,29,26@48");

  auto run_with = [&](bool penalty) {
    plant::PlantSim sim(cfg, cfg.ambient);  // same plant seed for the pair
    MpcController mpc(MpcConfig::preset(arx, penalty), penalty ? "mpc-p" : "mpc");
    EpisodeConfig ep;
    ep.steps = 240;
    return run_closed_loop(mpc, sim, ref, ep);
  };
  const EpisodeResult plain = run_with(false);
  const EpisodeResult penalized = run_with(true);

  CHECK(!plain.aborted);
  CHECK(!penalized.aborted);
  const double act_plain = plain.actuation_heater + plain.actuation_fan;
  const double act_pen = penalized.actuation_heater + penalized.actuation_fan;
  CHECK(act_pen <= act_plain + 1e-9);
  CHECK(penalized.mae < 1.0);
}

TEST_CASE("episodes are reproducible for identical seeds and profiles") {
  plant::PlantConfig cfg;
  cfg.rng_seed = 30;
  const models::ArxModel arx = plant_identified_arx(cfg);
  auto run = [&] {
    plant::PlantSim sim(cfg, 25.0);
    MpcController mpc(MpcConfig::preset(arx, false));
    EpisodeConfig ep;
    ep.steps = 40;
    const EpisodeResult r = run_closed_loop(mpc, sim, make_reference("sine:27,1.5,40"), ep);
    std::ostringstream ss;
    write_telemetry_csv(r, ss);
    return ss.str();
  };
  CHECK(run() == run());
}

TEST_CASE("reference profile library") {
  CHECK(make_reference("constant:26").at(100) == 26.0);
  const ReferenceProfile ramp = make_reference("ramp:24,30,7");
  CHECK(ramp.at(0) == 24.0);
  CHECK(ramp.at(6) == 30.0);
  CHECK(ramp.at(100) == 30.0);
  const ReferenceProfile stairs = make_reference("staircase:26,28@10");
  CHECK(stairs.at(9) == 26.0);
  CHECK(stairs.at(10) == 28.0);
  CHECK(stairs.at(500) == 28.0);
  const ReferenceProfile sine = make_reference("sine:27,2,40");
  CHECK(sine.at(10) == doctest::Approx(29.0).epsilon(1e-12));
  CHECK_THROWS_AS(make_reference("nope:1"), std::invalid_argument);
}
