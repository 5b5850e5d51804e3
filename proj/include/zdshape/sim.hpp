#pragma once

// Full minimal-form closed-loop simulation for design validation. The input
// torque is the exact feedback-linearizing law u = -f_y/g_y (plus an optional
// height-hold PD used only to counter numerical drift on long runs), so with
// zero gains ydd = 0 and the x channel plays out the zero dynamics.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "zdshape/dynamics.hpp"
#include "zdshape/zerodyn.hpp"

namespace zdshape {

// Torque that holds the height channel at the state (q, qdot).
inline double linearizing_input(const MechanismModel& m, const MassParams& pm,
                                const Spring& spring, const JointConfig& q,
                                const Vec4& qdot, double fd_scale = 1e-6) {
  const Vec2 chi = direct_kinematics(m, q);
  const Vec2 chidot = end_effector_jacobian(m, q) * qdot;
  const auto d = accel_decomposition(m, pm, spring, chi, chidot, q, fd_scale);
  return -d.f_y / d.g_y;
}

struct SimOptions {
  double dt = 1e-4;
  double horizon = 1.0;
  double height = 0.15;       // commanded slice height
  double kp = 0.0, kd = 0.0;  // height-hold pd gains (0 = pure linearizing torque)
  double x_lo = -1e30, x_hi = 1e30;
  double y_margin = 0.1;  // |y - height| escape bound
  double fd_scale = 1e-6;
};

struct SimFault {
  double t = 0.0;
  std::string what;
};

struct ClosedLoopTrajectory {
  std::vector<double> t, x, xdot, y, ydot, u, e_kin, e_pot;
  std::optional<SimFault> fault;  // set when the run was truncated
  bool stabilized = false;        // nonzero pd gains were active

  std::size_t size() const { return t.size(); }
};

namespace detail {

// RK4 on the state (x, y, xd, yd). control(t, state, decomposition) returns
// the input torque; kinematic or gain failures truncate the run with a fault
// record instead of propagating.
template <typename Control>
ClosedLoopTrajectory integrate_minimal(const MechanismModel& model, const MassParams& pm,
                                       const Spring& spring, const Vec2& chi0,
                                       const Vec2& chidot0, const SimOptions& opts,
                                       Control&& control) {
  ClosedLoopTrajectory traj;
  Vec4 s;
  s << chi0.x(), chi0.y(), chidot0.x(), chidot0.y();
  JointConfig warm = branch_guess(model, chi0);
  double u_log = 0.0;
  MinimalFormPoint pt_log;

  auto derivs = [&](const Vec4& st, double tt, bool log) {
    const Vec2 chi{st[0], st[1]};
    const Vec2 cd{st[2], st[3]};
    const MinimalFormPoint p = minimal_point(model, pm, spring, chi, cd, warm, opts.fd_scale);
    warm = p.q;
    const AccelDecomposition d = decompose(p);
    const double uu = control(tt, st, d);
    if (log) {
      u_log = uu;
      pt_log = p;
    }
    Vec4 ds;
    ds << st[2], st[3], d.f_x + d.g_x * uu, d.f_y + d.g_y * uu;
    return ds;
  };
  auto record = [&](double tt) {
    traj.t.push_back(tt);
    traj.x.push_back(s[0]);
    traj.xdot.push_back(s[2]);
    traj.y.push_back(s[1]);
    traj.ydot.push_back(s[3]);
    traj.u.push_back(u_log);
    traj.e_kin.push_back(0.5 * (pt_log.M11 * s[2] * s[2] + 2.0 * pt_log.M12 * s[2] * s[3] +
                                pt_log.M22 * s[3] * s[3]));
    traj.e_pot.push_back(gravity_potential(model, pm, pt_log.q) +
                         spring.potential(pt_log.theta));
  };

  const int steps = std::max<int>(1, static_cast<int>(std::llround(opts.horizon / opts.dt)));
  double t = 0.0;
  try {
    for (int k = 0; k <= steps; ++k) {
      const Vec4 d1 = derivs(s, t, true);
      record(t);
      if (k == steps) break;
      const double h = opts.dt;
      const Vec4 d2 = derivs(s + 0.5 * h * d1, t + 0.5 * h, false);
      const Vec4 d3 = derivs(s + 0.5 * h * d2, t + 0.5 * h, false);
      const Vec4 d4 = derivs(s + h * d3, t + h, false);
      s += (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
      t += h;
      if (!s.allFinite() || s[0] < opts.x_lo || s[0] > opts.x_hi ||
          std::abs(s[1] - opts.height) > opts.y_margin)
        throw Escape("state left the validity window at t=" + format_sig(t));
    }
  } catch (const std::exception& ex) {
    traj.fault = SimFault{t, ex.what()};
  }
  return traj;
}

}  // namespace detail

// u = (v - f_y)/g_y with v = -kp (y - height) - kd yd; zero gains give the
// pure linearizing torque and ydd identically zero up to integration error.
inline ClosedLoopTrajectory simulate_closed_loop(const MechanismModel& model,
                                                 const MassParams& pm,
                                                 const Spring& spring, const Vec2& chi0,
                                                 const Vec2& chidot0,
                                                 const SimOptions& opts) {
  auto control = [&opts](double, const Vec4& st, const AccelDecomposition& d) {
    const double v = -opts.kp * (st[1] - opts.height) - opts.kd * st[3];
    return (v - d.f_y) / d.g_y;
  };
  auto traj = detail::integrate_minimal(model, pm, spring, chi0, chidot0, opts, control);
  traj.stabilized = opts.kp != 0.0 || opts.kd != 0.0;
  return traj;
}

inline ClosedLoopTrajectory simulate_free(const MechanismModel& model, const MassParams& pm,
                                          const Spring& spring, const Vec2& chi0,
                                          const Vec2& chidot0, const SimOptions& opts) {
  return detail::integrate_minimal(model, pm, spring, chi0, chidot0, opts,
                                   [](double, const Vec4&, const AccelDecomposition&) {
                                     return 0.0;
                                   });
}

inline ClosedLoopTrajectory simulate_constant_input(const MechanismModel& model,
                                                    const MassParams& pm,
                                                    const Spring& spring, const Vec2& chi0,
                                                    const Vec2& chidot0, double torque,
                                                    const SimOptions& opts) {
  return detail::integrate_minimal(model, pm, spring, chi0, chidot0, opts,
                                   [torque](double, const Vec4&, const AccelDecomposition&) {
                                     return torque;
                                   });
}

// Max over the run of |E(t) - E(0) - W(t)| with W the trapezoidal integral of
// the actuation power through the input distribution.
inline double energy_audit(const ClosedLoopTrajectory& traj, const MechanismModel& model,
                           const MassParams& pm, const Spring& spring) {
  (void)pm;
  (void)spring;
  if (traj.size() < 2) return 0.0;
  JointConfig warm = branch_guess(model, {traj.x[0], traj.y[0]});
  const double e0 = traj.e_kin[0] + traj.e_pot[0];
  double worst = 0.0, work = 0.0, power_prev = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const JointConfig q = solve_configuration(model, {traj.x[i], traj.y[i]}, warm);
    warm = q;
    const Mat42 jac = coordinate_jacobian(model, q);
    const double power = (traj.xdot[i] * jac(0, 0) + traj.ydot[i] * jac(0, 1)) * traj.u[i];
    if (i > 0) work += 0.5 * (power + power_prev) * (traj.t[i] - traj.t[i - 1]);
    power_prev = power;
    worst = std::max(worst, std::abs(traj.e_kin[i] + traj.e_pot[i] - e0 - work));
  }
  return worst;
}

}  // namespace zdshape
