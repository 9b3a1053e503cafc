#ifndef TWINBOX_INTEGRATE_HPP
#define TWINBOX_INTEGRATE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace twinbox::ode {

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
struct OdeProblem {
  using Vec = Vector<Scalar>;
  using Rhs = std::function<Vec(Scalar, const Vec&)>;

  Eigen::Index dimension;
  Rhs rhs;
  Scalar t0;
  Scalar t1;
  Vec y0;
};

struct IntegratorConfig {
  double rel_tol = 1e-6;
  double abs_tol = 1e-8;
  int max_steps = 100000;
  double initial_step = 0.0;  // 0 = choose automatically
  double fixed_step = 0.0;    // > 0 disables adaptation; used for order studies
};

// Accepted steps, the first entry is (t0, y0) and the last lands on t1 exactly.
template <class Scalar>
struct OdeSolution {
  std::vector<Scalar> t;
  std::vector<Vector<Scalar>> y;
  int accepted = 0;
  int rejected = 0;

  const Vector<Scalar>& final_state() const { return y.back(); }
};

namespace detail {

// Dormand-Prince 5(4) tableau.
template <class S>
struct Dopri5 {
  static constexpr S c[7] = {S(0), S(1) / S(5), S(3) / S(10), S(4) / S(5),
                             S(8) / S(9), S(1), S(1)};
  static constexpr S a21 = S(1) / S(5);
  static constexpr S a31 = S(3) / S(40), a32 = S(9) / S(40);
  static constexpr S a41 = S(44) / S(45), a42 = S(-56) / S(15), a43 = S(32) / S(9);
  static constexpr S a51 = S(19372) / S(6561), a52 = S(-25360) / S(2187),
                     a53 = S(64448) / S(6561), a54 = S(-212) / S(729);
  static constexpr S a61 = S(9017) / S(3168), a62 = S(-355) / S(33),
                     a63 = S(46732) / S(5247), a64 = S(49) / S(176),
                     a65 = S(-5103) / S(18656);
  // 5th-order solution weights (also the a7j row; FSAL).
  static constexpr S b1 = S(35) / S(384), b3 = S(500) / S(1113), b4 = S(125) / S(192),
                     b5 = S(-2187) / S(6784), b6 = S(11) / S(84);
  // Difference between the 5th- and embedded 4th-order weights.
  static constexpr S e1 = S(71) / S(57600), e3 = S(-71) / S(16695), e4 = S(71) / S(1920),
                     e5 = S(-17253) / S(339200), e6 = S(22) / S(525), e7 = S(-1) / S(40);
};

}  // namespace detail

// Adaptive explicit Runge-Kutta with the Dormand-Prince 5(4) embedded pair,
// PI step-size control (safety 0.9) and FSAL reuse. The last step is clipped
// so the final time equals t1 exactly.
template <class Scalar>
OdeSolution<Scalar> solve_rk45(const OdeProblem<Scalar>& problem,
                               const IntegratorConfig& cfg = {}) {
  using Vec = Vector<Scalar>;
  using T = detail::Dopri5<Scalar>;

  if (!(problem.t1 > problem.t0)) throw std::invalid_argument("solve_rk45: t1 must be > t0");
  if (problem.y0.size() != problem.dimension) {
    throw std::invalid_argument("solve_rk45: y0 length does not match dimension");
  }
  if (!(cfg.rel_tol > 0) || !(cfg.abs_tol > 0)) {
    throw std::invalid_argument("solve_rk45: tolerances must be > 0");
  }

  const Scalar atol = static_cast<Scalar>(cfg.abs_tol);
  const Scalar rtol = static_cast<Scalar>(cfg.rel_tol);

  auto check_finite = [](const Vec& v) {
    if (!v.allFinite()) throw std::runtime_error("solve_rk45: rhs produced a non-finite value");
  };

  Scalar t = problem.t0;
  Vec y = problem.y0;
  Vec k1 = problem.rhs(t, y);
  check_finite(k1);

  // Hairer-style automatic initial step: scaled norms of y and f, one Euler
  // probe to estimate the second derivative, then h ~ accuracy^(1/5).
  Scalar h;
  const Scalar span = problem.t1 - problem.t0;
  if (cfg.fixed_step > 0) {
    h = static_cast<Scalar>(cfg.fixed_step);
  } else if (cfg.initial_step > 0) {
    h = static_cast<Scalar>(cfg.initial_step);
  } else {
    auto scaled_norm = [&](const Vec& v, const Vec& ref) {
      Scalar s = Scalar(0);
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        const Scalar sc = atol + rtol * std::abs(ref[i]);
        const Scalar e = v[i] / sc;
        s += e * e;
      }
      return std::sqrt(s / Scalar(v.size()));
    };
    const Scalar d0 = scaled_norm(y, y);
    const Scalar d1 = scaled_norm(k1, y);
    Scalar h0 = (d0 > Scalar(1e-5) && d1 > Scalar(1e-5)) ? Scalar(0.01) * d0 / d1
                                                         : Scalar(1e-6);
    h0 = std::min(h0, span);
    const Vec y1 = y + h0 * k1;
    const Vec f1 = problem.rhs(problem.t0 + h0, y1);
    check_finite(f1);
    const Scalar d2 = scaled_norm((f1 - k1).eval(), y) / h0;
    const Scalar d_max = std::max(d1, d2);
    const Scalar h1 = d_max > Scalar(1e-15)
                          ? std::pow(Scalar(0.01) / d_max, Scalar(1) / Scalar(5))
                          : std::max(Scalar(1e-6), h0 * Scalar(1e-3));
    h = std::min({Scalar(100) * h0, h1, span});
  }

  OdeSolution<Scalar> sol;
  sol.t.push_back(t);
  sol.y.push_back(y);

  Vec k2(y.size()), k3(y.size()), k4(y.size()), k5(y.size()), k6(y.size()), k7(y.size());
  Scalar prev_err = Scalar(1);  // PI memory
  const Scalar safety = Scalar(0.9);
  const Scalar alpha = Scalar(0.7) / Scalar(5);
  const Scalar beta = Scalar(0.4) / Scalar(5);

  int steps = 0;
  while (t < problem.t1) {
    if (++steps > cfg.max_steps) {
      throw std::runtime_error("solve_rk45: max_steps exceeded at t=" + std::to_string(double(t)));
    }
    bool clipped = false;
    if (t + h >= problem.t1) {
      h = problem.t1 - t;
      clipped = true;
    }

    k2 = problem.rhs(t + T::c[1] * h, (y + h * (T::a21 * k1)).eval());
    k3 = problem.rhs(t + T::c[2] * h, (y + h * (T::a31 * k1 + T::a32 * k2)).eval());
    k4 = problem.rhs(t + T::c[3] * h, (y + h * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3)).eval());
    k5 = problem.rhs(t + T::c[4] * h,
                     (y + h * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4)).eval());
    k6 = problem.rhs(
        t + h, (y + h * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 + T::a65 * k5))
                   .eval());
    Vec y_new = y + h * (T::b1 * k1 + T::b3 * k3 + T::b4 * k4 + T::b5 * k5 + T::b6 * k6);
    k7 = problem.rhs(t + h, y_new);
    check_finite(y_new);
    check_finite(k7);

    Vec err_vec =
        h * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);
    Scalar err = Scalar(0);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const Scalar sc = atol + rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      const Scalar e = err_vec[i] / sc;
      err += e * e;
    }
    err = std::sqrt(err / Scalar(y.size()));

    if (cfg.fixed_step > 0) {
      t = clipped ? problem.t1 : t + h;
      y.swap(y_new);
      k1.swap(k7);
      sol.t.push_back(t);
      sol.y.push_back(y);
      ++sol.accepted;
      h = static_cast<Scalar>(cfg.fixed_step);
      continue;
    }

    if (err <= Scalar(1)) {
      t = clipped ? problem.t1 : t + h;
      y.swap(y_new);
      k1.swap(k7);  // FSAL
      sol.t.push_back(t);
      sol.y.push_back(y);
      ++sol.accepted;
      const Scalar e = std::max(err, Scalar(1e-10));
      Scalar fac = safety * std::pow(e, -alpha) * std::pow(prev_err, beta);
      fac = std::clamp(fac, Scalar(0.2), Scalar(10));
      h *= fac;
      prev_err = e;
    } else {
      ++sol.rejected;
      Scalar fac = safety * std::pow(err, Scalar(-0.2));
      h *= std::clamp(fac, Scalar(0.1), Scalar(1));
    }
  }
  return sol;
}

}  // namespace twinbox::ode

#endif  // TWINBOX_INTEGRATE_HPP
