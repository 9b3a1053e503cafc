#include "twinbox/models.hpp"
#include "twinbox/plant.hpp"
#include "twinbox/thermal.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace twinbox;
using namespace twinbox::models;

namespace {

// Simulates a known intercept-free ARX process under random admissible
// inputs; the identification oracle for fit_arx.
Trajectory synthetic_arx_trajectory(const ArxModel& truth, int n, std::uint64_t seed) {
  Rng rng(seed);
  const int p = truth.p(), q = truth.q();
  std::vector<double> x(p, 25.0);
  std::vector<double> uh(q, 0.0), uf(q, 0.0);
  Trajectory traj;
  traj.dt = kDefaultDt;
  for (int k = 0; k < n; ++k) {
    const ControlInput u = quantize_control(rng.uniform(), rng.uniform());
    traj.samples.push_back(Sample{ThermalState(x.front(), 22.0), u});
    uh.insert(uh.begin(), u.heater_duty);
    uf.insert(uf.begin(), u.fan());
    uh.pop_back();
    uf.pop_back();
    double next = 0.0;
    for (int i = 0; i < p; ++i) next += truth.a[i] * x[i];
    for (int j = 0; j < q; ++j) next += truth.b_h[j] * uh[j] + truth.b_f[j] * uf[j];
    x.insert(x.begin(), next);
    x.pop_back();
  }
  return traj;
}

std::vector<Sample> constant_history(int n, double t_inside, double t_ambient,
                                     const ControlInput& u) {
  return std::vector<Sample>(n, Sample{ThermalState(t_inside, t_ambient), u});
}

}  // namespace

TEST_CASE("fit_arx recovers known coefficients from noiseless data") {
  ArxModel truth;
  truth.a = (Eigen::VectorXd(2) << 1.5, -0.56).finished();  // roots 0.7 and 0.8
  truth.b_h = (Eigen::VectorXd(1) << 0.3).finished();
  truth.b_f = (Eigen::VectorXd(1) << -0.2).finished();

  const Trajectory traj = synthetic_arx_trajectory(truth, 400, 100);
  const WindowedDataset ds = make_windows(traj, 2, 1);
  const ArxModel fitted = fit_arx(ds, 2, 1);

  CHECK((fitted.a - truth.a).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((fitted.b_h - truth.b_h).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((fitted.b_f - truth.b_f).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("constant trajectory yields a fixed-point predictor") {
  Trajectory traj;
  traj.dt = kDefaultDt;
  for (int k = 0; k < 60; ++k) {
    traj.samples.push_back(Sample{ThermalState(26.0, 22.0), ControlInput(0.2, 0)});
  }
  const WindowedDataset ds = make_windows(traj, 10, 1);
  const ArxPredictor model(fit_arx(ds));
  const ThermalState next =
      model.predict_step(constant_history(10, 26.0, 22.0, ControlInput(0.2, 0)),
                         ControlInput(0.2, 0));
  CHECK(std::abs(next.t_inside - 26.0) < 1e-6);
}

TEST_CASE("fit_arx error paths") {
  ArxModel truth;
  truth.a = (Eigen::VectorXd(2) << 0.9, 0.05).finished();
  truth.b_h = (Eigen::VectorXd(2) << 0.3, 0.1).finished();
  truth.b_f = (Eigen::VectorXd(2) << -0.2, -0.05).finished();
  const Trajectory traj = synthetic_arx_trajectory(truth, 60, 5);

  // Fewer pairs than coefficients.
  WindowedDataset small = make_windows(traj, 2, 1);
  small.pairs.erase(small.pairs.begin() + 5, small.pairs.end());
  CHECK_THROWS_AS(fit_arx(small, 2, 2), std::invalid_argument);

  // Rank deficiency without ridge: the fan never turns on.
  Trajectory no_fan;
  no_fan.dt = kDefaultDt;
  Rng rng(8);
  double t = 25.0;
  for (int k = 0; k < 80; ++k) {
    no_fan.samples.push_back(
        Sample{ThermalState(t, 22.0), quantize_control(rng.uniform(), 0.0)});
    t = 24.0 + 0.5 * rng.uniform();
  }
  CHECK_THROWS_WITH_AS(fit_arx(make_windows(no_fan, 3, 1), 3, 3, 0.0),
                       doctest::Contains("rank-deficient"), std::runtime_error);
}

TEST_CASE("idealized-model predictor fixed points and heating slope") {
  const PlantParams params;
  const PbmPredictor pbm(params);

  // No inputs: no dynamics at all.
  const auto hist = constant_history(1, 27.0, 22.0, ControlInput(0, 0));
  CHECK(pbm.predict_step(hist, ControlInput(0, 0)).t_inside == 27.0);

  // Full heat for one interval: slope H_max / (rho V cp), exactly linear.
  const double expected = 27.0 + params.h_max / params.heat_capacity() * kDefaultDt;
  const double got = pbm.predict_step(hist, ControlInput(1.0, 0)).t_inside;
  CHECK(std::abs(got - expected) < 1e-6);
  // Frozen value of the slope for the default parameters: 33.167 K per step.
  CHECK(expected - 27.0 == doctest::Approx(33.1674958).epsilon(1e-6));
}

TEST_CASE("hybrid model with zeroed residual equals the idealized model") {
  const PlantParams params;
  HamPredictor ham(params);
  ham.zero_residual();
  const PbmPredictor pbm(params);

  Rng rng(321);
  for (int k = 0; k < 1000; ++k) {
    const double t_amb = rng.uniform(18, 26);
    const auto hist =
        constant_history(1, rng.uniform(0, 50), t_amb, ControlInput(0, 0));
    const ControlInput u = quantize_control(rng.uniform(), rng.uniform());
    const double a = ham.predict_step(hist, u).t_inside;
    const double b = pbm.predict_step(hist, u).t_inside;
    CHECK(std::abs(a - b) < 1e-9);
  }
}

TEST_CASE("predict before train is rejected") {
  CHECK_THROWS_AS(LstmPredictor(10).predict_step(
                      constant_history(10, 25, 22, ControlInput(0, 0)), ControlInput(0, 0)),
                  std::logic_error);
  CHECK_THROWS_AS(HamPredictor(PlantParams{})
                      .predict_step(constant_history(1, 25, 22, ControlInput(0, 0)),
                                    ControlInput(0, 0)),
                  std::logic_error);
}

TEST_CASE("rollout consistency properties") {
  // Identity ARX holds the last value forever.
  ArxModel identity;
  identity.a = (Eigen::VectorXd(2) << 1.0, 0.0).finished();
  identity.b_h = (Eigen::VectorXd(1) << 0.0).finished();
  identity.b_f = (Eigen::VectorXd(1) << 0.0).finished();
  const ArxPredictor hold(identity);

  const auto hist = constant_history(2, 26.5, 22.0, ControlInput(0.1, 0));
  std::vector<ControlInput> schedule(25, ControlInput(0.3, 1));
  const Trajectory constant = hold.rollout(hist, schedule);
  for (const auto& s : constant.samples) CHECK(s.state.t_inside == 26.5);

  // A single-step rollout is exactly one predict_step.
  const PbmPredictor pbm{PlantParams{}};
  std::vector<ControlInput> one{ControlInput(0.5, 0)};
  const Trajectory roll1 = pbm.rollout(hist, one);
  CHECK(roll1.samples.size() == 1);
  CHECK(roll1.samples[0].state.t_inside ==
        pbm.predict_step(hist, one[0]).t_inside);
}

TEST_CASE("idealized-model rollout equals one long integration over the schedule") {
  PlantParams params;
  ode::IntegratorConfig tight;
  tight.rel_tol = 1e-10;
  tight.abs_tol = 1e-12;
  const PbmPredictor pbm(params, kDefaultDt, tight);

  Rng rng(9);
  std::vector<ControlInput> schedule;
  for (int k = 0; k < 12; ++k) {
    // Mild duties so the loss-free idealized model stays inside the band.
    schedule.push_back(quantize_control(0.05 * rng.uniform_int(0, 2), rng.uniform() < 0.5));
  }
  const auto hist = constant_history(1, 26.0, 22.0, ControlInput(0, 0));
  const Trajectory chained = pbm.rollout(hist, schedule);

  // Oracle: a single integration over the whole span with the piecewise-
  // constant input looked up from time (semigroup property of the flow).
  ode::OdeProblem<double> whole;
  whole.dimension = 1;
  whole.t0 = 0.0;
  whole.t1 = kDefaultDt * schedule.size();
  whole.y0 = ode::Vector<double>::Constant(1, 26.0);
  whole.rhs = [&](double t, const ode::Vector<double>& y) {
    int k = std::min<int>(static_cast<int>(t / kDefaultDt), schedule.size() - 1);
    ode::Vector<double> dy(1);
    dy[0] = thermal_rate(y[0], 22.0, schedule[k], params);
    return dy;
  };
  const double oracle = ode::solve_rk45(whole, tight).final_state()[0];
  CHECK(std::abs(chained.samples.back().state.t_inside - oracle) < 1e-6);
}

TEST_CASE("rollout reports the step at which a prediction escapes the band") {
  ArxModel runaway;
  runaway.a = (Eigen::VectorXd(1) << 1.35).finished();  // unstable pole
  runaway.b_h = (Eigen::VectorXd(1) << 0.0).finished();
  runaway.b_f = (Eigen::VectorXd(1) << 0.0).finished();
  const ArxPredictor model(runaway);
  const auto hist = constant_history(1, 30.0, 22.0, ControlInput(0, 0));
  std::vector<ControlInput> schedule(40, ControlInput(0, 0));
  CHECK_THROWS_WITH_AS(model.rollout(hist, schedule), doctest::Contains("step"),
                       std::runtime_error);
}

TEST_CASE("ARX one-step prediction is linear in the state history") {
  ArxModel truth;
  truth.a = (Eigen::VectorXd(3) << 0.5, 0.3, 0.1).finished();
  truth.b_h = (Eigen::VectorXd(2) << 0.4, 0.1).finished();
  truth.b_f = (Eigen::VectorXd(2) << -0.3, -0.1).finished();
  const ArxPredictor model(truth);

  Rng rng(17);
  const ControlInput u(0.25, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Sample> h1, h2, mix;
    const double alpha = 0.3, beta = 0.7;
    for (int k = 0; k < 3; ++k) {
      const double x1 = rng.uniform(20, 30);
      const double x2 = rng.uniform(20, 30);
      h1.push_back(Sample{ThermalState(x1, 22), u});
      h2.push_back(Sample{ThermalState(x2, 22), u});
      mix.push_back(Sample{ThermalState(alpha * x1 + beta * x2, 22), u});
    }
    // With matching controls, the control contribution is affine and must be
    // weighted out: alpha + beta = 1 keeps it intact.
    const double lhs = model.predict_step(mix, u).t_inside;
    const double rhs = alpha * model.predict_step(h1, u).t_inside +
                       beta * model.predict_step(h2, u).t_inside;
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("checkpoints round-trip through the predictor loader") {
  ArxModel m;
  m.a = (Eigen::VectorXd(2) << 0.8, 0.15).finished();
  m.b_h = (Eigen::VectorXd(2) << 0.2, 0.05).finished();
  m.b_f = (Eigen::VectorXd(2) << -0.1, -0.02).finished();
  const ArxPredictor arx(m);

  std::stringstream ss;
  arx.save(ss);
  const auto loaded = load_predictor(ss);
  CHECK(loaded->name() == "linear");

  const auto hist = constant_history(2, 27.0, 22.0, ControlInput(0.1, 1));
  const ControlInput u(0.45, 0);
  CHECK(loaded->predict_step(hist, u).t_inside == arx.predict_step(hist, u).t_inside);
  CHECK(arx.checkpoint_bytes() == ss.str().size());

  HamPredictor ham{PlantParams{}};
  ham.zero_residual();
  std::stringstream hs;
  ham.save(hs);
  const auto ham2 = load_predictor(hs);
  CHECK(ham2->name() == "ham");
  CHECK(ham2->predict_step(hist, u).t_inside ==
        doctest::Approx(ham.predict_step(hist, u).t_inside).epsilon(1e-15));
}

TEST_CASE("hybrid training beats the uncorrected model on mismatched data") {
  plant::PlantConfig cfg;
  cfg.rng_seed = 21;
  const plant::ScenarioSpec spec = plant::load_scenario(
      std::string(TWINBOX_DATA_DIR) + "/scenarios/scenario1.cfg");
  plant::ScenarioSpec small = spec;
  small.train_series = 3;
  const auto series = plant::generate_training_set(small, cfg);
  const WindowedDataset ds = make_windows(series, 10, 1);
  const auto [train, val] = chrono_split(ds, 0.8);

  nnet::TrainConfig tc = HamPredictor::default_train_config();
  tc.epochs = 120;
  tc.rng_seed = 3;
  nnet::TrainResult result;
  const auto ham = train_ham(cfg.params, train, val, tc, &result);
  CHECK(ham->corrected_val_mae() < ham->uncorrected_val_mae());
  CHECK(result.epochs_run >= 1);

  // Mismatch-free plant: the learned correction stays small.
  plant::PlantConfig clean = cfg;
  clean.wall_loss_coeff = 0.0;
  clean.heater_lag_tau = 0.0;
  clean.fan_leak_frac = 0.0;
  const auto clean_series = plant::generate_training_set(small, clean);
  const WindowedDataset clean_ds = make_windows(clean_series, 10, 1);
  const auto [ctrain, cval] = chrono_split(clean_ds, 0.8);
  const auto clean_ham = train_ham(clean.params, ctrain, cval, tc);
  double mean_rate = 0.0;
  for (const auto& pair : cval.pairs) {
    const Sample& newest = pair.window.back();
    const double t_hat = thermal_step(newest.state.t_inside, newest.state.t_ambient,
                                      newest.control, clean.params, kDefaultDt);
    mean_rate += std::abs(clean_ham->residual_rate(t_hat, newest.state.t_ambient,
                                                   newest.control));
  }
  mean_rate /= static_cast<double>(cval.pairs.size());
  CHECK(mean_rate < 1e-2);

  CHECK_THROWS_AS(train_ham(cfg.params, WindowedDataset{}, val, tc), std::invalid_argument);
}
