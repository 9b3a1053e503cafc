#ifndef TWINBOX_THERMAL_HPP
#define TWINBOX_THERMAL_HPP

#include "twinbox/core.hpp"
#include "twinbox/integrate.hpp"

namespace twinbox {

// Lumped energy balance of the enclosure air volume:
//   dT/dt = u_h*H_max / (rho*V*cp)  -  u_f*F_max * (T - T_amb) / V
// This is the idealized model (no wall losses, instantaneous actuators); the
// plant simulator adds its mismatch terms on top of the same expression.
inline double thermal_rate(double t_inside, double t_ambient, const ControlInput& u,
                           const PlantParams& p) {
  const double heating = u.heater_duty * p.h_max / p.heat_capacity();
  const double exchange = u.fan() * p.f_max * (t_inside - t_ambient) / p.volume;
  return heating - exchange;
}

// Integrates the energy balance over one zero-order-hold interval, with an
// optional constant corrective source term (K/s) added to the rate.
// Returns the inside temperature after dt seconds.
inline double thermal_step(double t_inside, double t_ambient, const ControlInput& u,
                           const PlantParams& p, double dt, double source = 0.0,
                           const ode::IntegratorConfig& cfg = {}) {
  ode::OdeProblem<double> problem;
  problem.dimension = 1;
  problem.t0 = 0.0;
  problem.t1 = dt;
  problem.y0 = ode::Vector<double>::Constant(1, t_inside);
  problem.rhs = [&](double, const ode::Vector<double>& y) {
    ode::Vector<double> dy(1);
    dy[0] = thermal_rate(y[0], t_ambient, u, p) + source;
    return dy;
  };
  return ode::solve_rk45(problem, cfg).final_state()[0];
}

}  // namespace twinbox

#endif  // TWINBOX_THERMAL_HPP
