#include "twinbox/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace twinbox::control {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void MpcConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("MpcConfig: horizon must be >= 1");
  if (w_t < 0 || w_uh < 0 || w_uf < 0) {
    throw std::invalid_argument("MpcConfig: weights must be >= 0");
  }
  if (model.p() < 1 || model.q() < 1) throw std::invalid_argument("MpcConfig: empty model");
}

MpcConfig MpcConfig::preset(models::ArxModel model, bool penalty) {
  MpcConfig cfg;
  cfg.model = std::move(model);
  cfg.w_t = 10.0;
  cfg.w_uh = penalty ? 1.0 : 0.0;
  cfg.w_uf = penalty ? 1.0 : 0.0;
  return cfg;
}

double mpc_stage_cost(const MpcConfig& cfg, double x, double x_ref, double uh, double uf) {
  const double dev = x_ref - x;
  return cfg.w_t * dev * dev + cfg.w_uh * uh * uh + cfg.w_uf * uf * uf;
}

namespace {

VectorXd clamp01(VectorXd v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i], 0.0, 1.0);
  return v;
}

struct QuadCost {
  // f(u) = |S u + base - ref|^2_Q + u^T R u, flattened to
  //        0.5 u^T H u + g0^T u + c.
  MatrixXd hess;
  VectorXd lin;
  double constant = 0.0;

  double value(const VectorXd& u) const {
    return 0.5 * u.dot(hess * u) + lin.dot(u) + constant;
  }
  VectorXd gradient(const VectorXd& u) const { return hess * u + lin; }
};

}  // namespace

MpcSolution mpc_step(const MpcConfig& cfg, std::span<const Sample> history, double x_ref,
                     const VectorXd* warm_start) {
  cfg.validate();
  const models::ArxModel& model = cfg.model;
  const int n = cfg.horizon;
  const int lookback = std::max(model.p(), model.q());
  if (static_cast<int>(history.size()) < lookback) {
    throw std::invalid_argument("mpc_step: infeasible history, need " +
                                std::to_string(lookback) + " samples");
  }

  // Newest-first lag vectors. The newest sample's control slot is the input
  // being decided, so recorded inputs start one sample back.
  const auto recent = history.last(lookback);
  const int last = lookback - 1;
  VectorXd x_hist(model.p());
  for (int i = 0; i < model.p(); ++i) x_hist[i] = recent[last - i].state.t_inside;
  VectorXd uh_hist(std::max(model.q() - 1, 1)), uf_hist(std::max(model.q() - 1, 1));
  uh_hist.setZero();
  uf_hist.setZero();
  for (int j = 1; j < model.q(); ++j) {
    uh_hist[j - 1] = recent[last - j].control.heater_duty;
    uf_hist[j - 1] = recent[last - j].control.fan();
  }

  // The predicted trajectory is affine in u: columns of S from unit impulses.
  const VectorXd u0 = VectorXd::Zero(2 * n);
  const VectorXd base = model.simulate(x_hist, uh_hist, uf_hist, u0, n);
  MatrixXd sens(n, 2 * n);
  for (int j = 0; j < 2 * n; ++j) {
    VectorXd impulse = u0;
    impulse[j] = 1.0;
    sens.col(j) = model.simulate(x_hist, uh_hist, uf_hist, impulse, n) - base;
  }

  QuadCost cost;
  const VectorXd ref = VectorXd::Constant(n, x_ref);
  MatrixXd r_diag = MatrixXd::Zero(2 * n, 2 * n);
  r_diag.diagonal().head(n).setConstant(cfg.w_uh);
  r_diag.diagonal().tail(n).setConstant(cfg.w_uf);
  cost.hess = 2.0 * (cfg.w_t * sens.transpose() * sens + r_diag);
  cost.lin = 2.0 * cfg.w_t * sens.transpose() * (base - ref);
  cost.constant = cfg.w_t * (base - ref).squaredNorm();

  // Projected BFGS from the shifted previous plan.
  VectorXd u = VectorXd::Constant(2 * n, 0.0);
  if (warm_start != nullptr && warm_start->size() == 2 * n) {
    u.head(n - 1) = warm_start->segment(1, n - 1);
    u[n - 1] = (*warm_start)[n - 1];
    u.segment(n, n - 1) = warm_start->segment(n + 1, n - 1);
    u[2 * n - 1] = (*warm_start)[2 * n - 1];
  }
  u = clamp01(std::move(u));

  MatrixXd h_inv = MatrixXd::Identity(2 * n, 2 * n);
  VectorXd grad = cost.gradient(u);
  double f = cost.value(u);
  VectorXd best_u = u;
  double best_f = f;

  // Zero direction components that push against an active bound, so clipped
  // coordinates cannot mask progress in the free ones.
  auto mask_active = [&u](VectorXd d) {
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if ((u[i] <= 0.0 && d[i] < 0.0) || (u[i] >= 1.0 && d[i] > 0.0)) d[i] = 0.0;
    }
    return d;
  };

  // Armijo backtracking along the projection arc. The cost is quadratic, so
  // the exact 1-D minimizer along `d` is the natural first trial.
  auto line_search = [&](const VectorXd& d, VectorXd& u_new, double& f_new) {
    const double curvature = d.dot(cost.hess * d);
    double alpha = 1.0;
    if (curvature > 0) {
      alpha = std::clamp(-grad.dot(d) / curvature, 1e-12, 1e3);
    }
    for (int ls = 0; ls < 40; ++ls) {
      u_new = clamp01(u + alpha * d);
      f_new = cost.value(u_new);
      const double decrease = grad.dot(u_new - u);
      if (f_new <= f + 1e-4 * decrease && f_new < f) return true;
      alpha *= 0.5;
    }
    return false;
  };

  MpcSolution sol;
  const double grad_scale = 1.0 + grad.lpNorm<Eigen::Infinity>();
  int f_stall = 0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    sol.iterations = it + 1;
    // Projected-gradient stationarity, relative to the initial gradient scale.
    const VectorXd proj_step = clamp01(u - grad) - u;
    if (proj_step.lpNorm<Eigen::Infinity>() < cfg.grad_tol * grad_scale) {
      sol.converged = true;
      break;
    }
    // A chattering active set can keep producing vanishing improvements;
    // three of them in a row is numerical stationarity as well.
    if (f_stall >= 3) {
      sol.converged = true;
      break;
    }

    VectorXd direction = mask_active(-(h_inv * grad));
    if (direction.dot(grad) >= 0) {
      h_inv.setIdentity();
      direction = mask_active(-grad);
    }

    VectorXd u_new;
    double f_new = f;
    bool improved = line_search(direction, u_new, f_new);
    if (!improved) {
      // The curvature memory learned across a changing active set can go
      // stale; retry once from steepest descent.
      h_inv.setIdentity();
      direction = mask_active(-grad);
      improved = line_search(direction, u_new, f_new);
      if (!improved) {
        // Even exact-step steepest descent cannot improve the convex
        // quadratic: numerically stationary.
        sol.converged = true;
        break;
      }
    }

    const VectorXd grad_new = cost.gradient(u_new);
    const VectorXd s = u_new - u;
    const VectorXd yv = grad_new - grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      const MatrixXd eye = MatrixXd::Identity(2 * n, 2 * n);
      const MatrixXd left = eye - (s * yv.transpose()) / sy;
      h_inv = left * h_inv * left.transpose() + (s * s.transpose()) / sy;
    }
    f_stall = (f - f_new) <= 1e-10 * (1.0 + std::abs(f)) ? f_stall + 1 : 0;
    u = u_new;
    grad = grad_new;
    f = f_new;
    if (f < best_f) {
      best_f = f;
      best_u = u;
    }
  }

  // Quantize the first input. The continuous optimum is rounded both ways on
  // each actuator and the cheapest grid neighbor wins, which matters when the
  // relaxed fan value sits near 1/2.
  const double uh_star = best_u[0];
  const double uf_star = best_u[n];
  double best_cost = std::numeric_limits<double>::infinity();
  ControlInput best_input(0, 0);
  for (const double uh : {std::floor(uh_star / kHeaterStep) * kHeaterStep,
                          std::ceil(uh_star / kHeaterStep) * kHeaterStep}) {
    for (const int uf : {0, 1}) {
      const ControlInput candidate = quantize_control(uh, uf);
      VectorXd trial = best_u;
      trial[0] = candidate.heater_duty;
      trial[n] = candidate.fan();
      const double c = cost.value(trial);
      if (c < best_cost) {
        best_cost = c;
        best_input = candidate;
      }
    }
  }

  sol.u = best_input;
  sol.cost = best_cost;
  sol.plan = best_u;
  sol.plan[0] = best_input.heater_duty;
  sol.plan[n] = best_input.fan();
  return sol;
}

}  // namespace twinbox::control
