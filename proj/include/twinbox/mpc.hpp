#ifndef TWINBOX_MPC_HPP
#define TWINBOX_MPC_HPP

#include "twinbox/core.hpp"
#include "twinbox/models.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>

namespace twinbox::control {

// Receding-horizon controller on the linear one-step model. The relaxed
// problem is a convex quadratic over u in [0,1]^(2N); it is minimized with a
// projected quasi-Newton (BFGS) iteration and only the first input of the
// optimal plan is applied, quantized onto the actuator grids.
struct MpcConfig {
  int horizon = 10;     // N
  double w_t = 10.0;    // state deviation weight (Q)
  double w_uh = 0.0;    // heater effort weight (R)
  double w_uf = 0.0;    // fan effort weight (R)
  models::ArxModel model;
  int max_iters = 200;
  double grad_tol = 1e-6;

  void validate() const;

  // The two weight presets: (10,0,0) without and (10,1,1) with penalty.
  static MpcConfig preset(models::ArxModel model, bool penalty);
};

struct MpcSolution {
  ControlInput u{0, 0};
  double cost = 0.0;       // relaxed cost of the returned plan
  bool converged = false;  // projected-gradient criterion met within max_iters
  int iterations = 0;
  Eigen::VectorXd plan;    // [uh_0..uh_{N-1}, uf_0..uf_{N-1}]
};

// Stage cost of one step: w_t*(ref - x)^2 + w_uh*uh^2 + w_uf*uf^2.
double mpc_stage_cost(const MpcConfig& cfg, double x, double x_ref, double uh, double uf);

// Solves the horizon problem from the measured history; the reference is held
// constant across the horizon. `warm_start` is the previous plan, shifted by
// one step inside. Throws if the history is shorter than the model lookback.
MpcSolution mpc_step(const MpcConfig& cfg, std::span<const Sample> history, double x_ref,
                     const Eigen::VectorXd* warm_start = nullptr);

}  // namespace twinbox::control

#endif  // TWINBOX_MPC_HPP
