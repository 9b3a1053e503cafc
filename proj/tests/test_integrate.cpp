#include "twinbox/integrate.hpp"
#include "twinbox/thermal.hpp"

#include <doctest.h>

#include <cmath>

using namespace twinbox;
using ode::IntegratorConfig;
using ode::OdeProblem;
using Vec = ode::Vector<double>;

namespace {

OdeProblem<double> decay_problem(double t1 = 1.0) {
  OdeProblem<double> p;
  p.dimension = 1;
  p.t0 = 0.0;
  p.t1 = t1;
  p.y0 = Vec::Constant(1, 1.0);
  p.rhs = [](double, const Vec& y) { return (-y).eval(); };
  return p;
}

}  // namespace

TEST_CASE("exponential decay within default tolerance") {
  const auto sol = ode::solve_rk45(decay_problem());
  CHECK(sol.t.back() == 1.0);
  CHECK(std::abs(sol.final_state()[0] - std::exp(-1.0)) < 1e-6);
}

TEST_CASE("constant field is exact") {
  OdeProblem<double> p;
  p.dimension = 1;
  p.t0 = 0.0;
  p.t1 = 100.0;
  p.y0 = Vec::Constant(1, 5.0);
  p.rhs = [](double, const Vec& y) { return Vec::Zero(y.size()).eval(); };
  const auto sol = ode::solve_rk45(p);
  CHECK(sol.final_state()[0] == 5.0);
  CHECK(sol.t.back() == 100.0);
}

TEST_CASE("tighter tolerances give strictly smaller decay error") {
  // An error-per-step controller yields global error ~ tol^(4/5), so each
  // halving buys ~1.7x; assert monotone improvement per halving and the
  // asymptotic slope over four halvings.
  const double exact = std::exp(-1.0);
  double prev = -1.0;
  std::vector<double> errs;
  for (int halvings = 0; halvings <= 4; ++halvings) {
    IntegratorConfig cfg;
    cfg.rel_tol = 1e-6 / (1 << halvings);
    cfg.abs_tol = 1e-8 / (1 << halvings);
    errs.push_back(std::abs(ode::solve_rk45(decay_problem(), cfg).final_state()[0] - exact));
  }
  for (std::size_t k = 1; k < errs.size(); ++k) CHECK(errs[k] < errs[k - 1]);
  CHECK(errs.front() / errs.back() > 4.0);
}

TEST_CASE("fixed-step halving shows the 5th-order convergence of the pair") {
  const double exact = std::exp(-1.0);
  auto err_at = [&](double h) {
    IntegratorConfig cfg;
    cfg.fixed_step = h;
    return std::abs(ode::solve_rk45(decay_problem(), cfg).final_state()[0] - exact);
  };
  const double e1 = err_at(0.2);
  const double e2 = err_at(0.1);
  const double e3 = err_at(0.05);
  // h^5 truncation: each halving should buy close to 32x; 16x is the lenient
  // floor used by the acceptance gate's order check.
  CHECK(e1 / e2 > 16.0);
  CHECK(e2 / e3 > 16.0);
}

TEST_CASE("energy balance step matches the closed-form linear solution") {
  // dT/dt = A - B (T - T_amb) with constant inputs is linear; its exact
  // solution is the oracle here.
  PlantParams params;
  const ControlInput u(1.0, 1);
  const double t_amb = 22.0;
  const double t0 = 25.0;
  const double dt = 60.0;

  const double a = u.heater_duty * params.h_max / params.heat_capacity();
  const double b = u.fan() * params.f_max / params.volume;
  const double t_inf = t_amb + a / b;
  const double exact = t_inf + (t0 - t_inf) * std::exp(-b * dt);

  const double numeric = thermal_step(t0, t_amb, u, params, dt);
  CHECK(std::abs(numeric - exact) < 1e-5);

  // Heater-only case grows linearly: T0 + a*dt exactly.
  const ControlInput heat_only(1.0, 0);
  const double linear = thermal_step(t0, t_amb, heat_only, params, dt);
  CHECK(std::abs(linear - (t0 + a * dt)) < 1e-6);
}

TEST_CASE("time reversal returns to the initial state") {
  OdeProblem<double> fwd;
  fwd.dimension = 2;
  fwd.t0 = 0.0;
  fwd.t1 = 3.0;
  fwd.y0 = Vec(2);
  fwd.y0 << 1.0, 0.25;
  fwd.rhs = [](double t, const Vec& y) {
    Vec dy(2);
    dy[0] = -0.7 * y[0] + 0.2 * y[1] + 0.1 * std::sin(t);
    dy[1] = -0.3 * y[1] + 0.05 * y[0];
    return dy;
  };
  const auto sol = ode::solve_rk45(fwd);

  // Integrate the reversed field over the same span.
  OdeProblem<double> bwd = fwd;
  bwd.y0 = sol.final_state();
  bwd.rhs = [&fwd](double t, const Vec& y) { return (-fwd.rhs(fwd.t1 - t, y)).eval(); };
  const auto back = ode::solve_rk45(bwd);

  IntegratorConfig cfg;
  const double tol = 10.0 * (cfg.abs_tol + cfg.rel_tol * fwd.y0.norm());
  CHECK((back.final_state() - fwd.y0).norm() < tol);
}

TEST_CASE("integrator error paths") {
  OdeProblem<double> p = decay_problem();
  p.t1 = 0.0;
  CHECK_THROWS_AS(ode::solve_rk45(p), std::invalid_argument);

  OdeProblem<double> nan_rhs = decay_problem();
  nan_rhs.rhs = [](double, const Vec& y) {
    return (y.array() * std::numeric_limits<double>::quiet_NaN()).matrix().eval();
  };
  CHECK_THROWS_AS(ode::solve_rk45(nan_rhs), std::runtime_error);

  OdeProblem<double> stiff = decay_problem(1e6);
  IntegratorConfig tiny;
  tiny.max_steps = 10;
  CHECK_THROWS_AS(ode::solve_rk45(stiff, tiny), std::runtime_error);

  OdeProblem<double> bad_dim = decay_problem();
  bad_dim.dimension = 2;
  CHECK_THROWS_AS(ode::solve_rk45(bad_dim), std::invalid_argument);
}
