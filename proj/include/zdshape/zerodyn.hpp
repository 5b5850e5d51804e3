#pragma once

// Zero dynamics of the height-constrained chain. With the end-effector held
// on the slice y = height by the linearizing torque, the residual motion
// satisfies
//
//   alpha(x) xdd + beta(x) xd^2 + gamma(x) = 0,
//
// with gamma split as zeta_s(x) S(theta(x)) + zeta_u(x), so the spring law S
// shapes the zero dynamics directly. Inverting that relation along a
// reference orbit yields the ideal spring torque curve and the residual
// feedforward torque; a finite-difference sign test on gamma_hat/alpha
// classifies the enclosed equilibrium.
//
// Slice stations cache the kinematics at a fixed x so that every
// inertia/gravity scalar becomes a closed-form polynomial in the added-mass
// parameters (linear in each mass, quadratic in its arm). Building a station
// costs five constraint solves; evaluating one for a given mass distribution
// is branch-free arithmetic, which is what makes the optimization loops cheap.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "zdshape/dynamics.hpp"
#include "zdshape/reference.hpp"

namespace zdshape {

struct AlphaVanishes : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ZetaSVanishes : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoEquilibrium : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Escape : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroDynCoeffs {
  double alpha = 0, beta = 0, gamma = 0;
  double zeta_s = 0, zeta_u = 0;  // gamma = zeta_s * S(theta) + zeta_u
  double theta = 0;
};

// value = base + sum_k mass_k * (c0 + arm_k c1 + arm_k^2 c2), k over {L3, L4}
struct PmPoly {
  double base = 0.0;
  std::array<std::array<double, 3>, 2> added{};

  double eval(const std::array<double, 2>& mass, const std::array<double, 2>& arm) const {
    double v = base;
    for (int k = 0; k < 2; ++k)
      v += mass[k] * (added[k][0] + arm[k] * (added[k][1] + arm[k] * added[k][2]));
    return v;
  }
};

struct SliceStation {
  double x = 0, height = 0, theta = 0;
  JointConfig q;
  double B1 = 0, B2 = 0;    // input distribution on the slice
  double q4x = 0, q4y = 0;  // dq4/d(x, y)
  double zeta_s = 0;        // B2 q4x - B1 q4y, mass-independent
  std::array<double, 2> half_arm{};  // l3/2, l4/2 (arm = half_arm - delta)
  PmPoly M11, M12, M22;
  PmPoly dM11dx, dM12dx, dM11dy;
  PmPoly Ugx, Ugy;
};

struct StationEval {
  double M11 = 0, M12 = 0, M22 = 0;
  double dM11dx = 0, dM12dx = 0, dM11dy = 0;
  double Ugx = 0, Ugy = 0;
};

namespace detail {

struct SliceBlocks {
  JointConfig q;
  double theta = 0;
  double B1 = 0, B2 = 0, q4x = 0, q4y = 0;
  std::array<double, 3> m_base{};  // projected M11, M12, M22 with no added mass
  // unit-mass projected inertia entries per link at arms 0, +1, -1
  std::array<std::array<std::array<double, 3>, 3>, 2> m_probe{};
  Vec2 ug_base{0, 0};
  std::array<std::array<Vec2, 2>, 2> ug_probe{};  // per link, arms 0 and 1
};

inline SliceBlocks slice_blocks(const MechanismModel& m, const Vec2& at,
                                const JointConfig& warm) {
  SliceBlocks b;
  b.q = solve_configuration(m, at, warm);
  const Mat42 jac = coordinate_jacobian(m, b.q);
  b.theta = spring_angle(m, b.q);
  b.B1 = jac(0, 0);
  b.B2 = jac(0, 1);
  b.q4x = jac(3, 0);
  b.q4y = jac(3, 1);
  b.m_base = projected_inertia(m, MassParams{}, b.q, jac);
  const Vec4 c1 = jac.col(0), c2 = jac.col(1);
  const double arms[3] = {0.0, 1.0, -1.0};
  for (int k = 0; k < 2; ++k) {
    const int link = 2 + k;
    for (int a = 0; a < 3; ++a) {
      const Mat24 ja = point_jacobian(m, b.q, link, arms[a]);
      const Vec2 j1 = ja * c1, j2 = ja * c2;
      b.m_probe[k][a] = {j1.dot(j1), j1.dot(j2), j2.dot(j2)};
    }
    for (int a = 0; a < 2; ++a) {
      const Vec4 gq = m.gravity * point_jacobian(m, b.q, link, arms[a]).row(1).transpose();
      b.ug_probe[k][a] = Vec2{c1.dot(gq), c2.dot(gq)};
    }
  }
  const Vec4 gq0 = joint_gravity_grad(m, MassParams{}, b.q);
  b.ug_base = Vec2{c1.dot(gq0), c2.dot(gq0)};
  return b;
}

// Exact quadratic reconstruction from samples at arm = 0, +1, -1.
inline PmPoly fit_inertia_poly(const SliceBlocks& b, int entry) {
  PmPoly p;
  p.base = b.m_base[entry];
  for (int k = 0; k < 2; ++k) {
    const double f0 = b.m_probe[k][0][entry];
    const double fp = b.m_probe[k][1][entry];
    const double fm = b.m_probe[k][2][entry];
    p.added[k][0] = f0;
    p.added[k][1] = 0.5 * (fp - fm);
    p.added[k][2] = 0.5 * (fp + fm) - f0;
  }
  return p;
}

// Gravity contributions are affine in the arm.
inline PmPoly fit_gravity_poly(const SliceBlocks& b, int axis) {
  PmPoly p;
  p.base = b.ug_base[axis];
  for (int k = 0; k < 2; ++k) {
    const double f0 = b.ug_probe[k][0][axis];
    const double f1 = b.ug_probe[k][1][axis];
    p.added[k][0] = f0;
    p.added[k][1] = f1 - f0;
    p.added[k][2] = 0.0;
  }
  return p;
}

inline PmPoly central_difference(const PmPoly& plus, const PmPoly& minus, double inv2d) {
  PmPoly p;
  p.base = (plus.base - minus.base) * inv2d;
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 3; ++c)
      p.added[k][c] = (plus.added[k][c] - minus.added[k][c]) * inv2d;
  return p;
}

}  // namespace detail

inline SliceStation make_station(const MechanismModel& m, double x, double height,
                                 const JointConfig& warm, double fd_scale = 1e-6) {
  const Vec2 chi{x, height};
  const auto bc = detail::slice_blocks(m, chi, warm);
  const double delta = fd_scale * m.length_scale();
  const auto bxp = detail::slice_blocks(m, chi + Vec2{delta, 0.0}, bc.q);
  const auto bxm = detail::slice_blocks(m, chi - Vec2{delta, 0.0}, bc.q);
  const auto byp = detail::slice_blocks(m, chi + Vec2{0.0, delta}, bc.q);
  const auto bym = detail::slice_blocks(m, chi - Vec2{0.0, delta}, bc.q);
  const double inv2d = 1.0 / (2.0 * delta);

  SliceStation st;
  st.x = x;
  st.height = height;
  st.q = bc.q;
  st.theta = bc.theta;
  st.B1 = bc.B1;
  st.B2 = bc.B2;
  st.q4x = bc.q4x;
  st.q4y = bc.q4y;
  st.zeta_s = bc.B2 * bc.q4x - bc.B1 * bc.q4y;
  st.half_arm = {0.5 * m.link_lengths[2], 0.5 * m.link_lengths[3]};
  st.M11 = detail::fit_inertia_poly(bc, 0);
  st.M12 = detail::fit_inertia_poly(bc, 1);
  st.M22 = detail::fit_inertia_poly(bc, 2);
  st.dM11dx = detail::central_difference(detail::fit_inertia_poly(bxp, 0),
                                         detail::fit_inertia_poly(bxm, 0), inv2d);
  st.dM12dx = detail::central_difference(detail::fit_inertia_poly(bxp, 1),
                                         detail::fit_inertia_poly(bxm, 1), inv2d);
  st.dM11dy = detail::central_difference(detail::fit_inertia_poly(byp, 0),
                                         detail::fit_inertia_poly(bym, 0), inv2d);
  st.Ugx = detail::fit_gravity_poly(bc, 0);
  st.Ugy = detail::fit_gravity_poly(bc, 1);
  return st;
}

inline StationEval eval_station(const SliceStation& st, const MassParams& pm) {
  const std::array<double, 2> mass{pm.m_a3, pm.m_a4};
  const std::array<double, 2> arm{st.half_arm[0] - pm.delta3, st.half_arm[1] - pm.delta4};
  StationEval e;
  e.M11 = st.M11.eval(mass, arm);
  e.M12 = st.M12.eval(mass, arm);
  e.M22 = st.M22.eval(mass, arm);
  e.dM11dx = st.dM11dx.eval(mass, arm);
  e.dM12dx = st.dM12dx.eval(mass, arm);
  e.dM11dy = st.dM11dy.eval(mass, arm);
  e.Ugx = st.Ugx.eval(mass, arm);
  e.Ugy = st.Ugy.eval(mass, arm);
  return e;
}

inline double station_alpha(const SliceStation& st, const StationEval& e) {
  return e.M11 * st.B2 - e.M12 * st.B1;
}

inline double station_beta(const SliceStation& st, const StationEval& e) {
  return -st.B1 * (e.dM12dx - 0.5 * e.dM11dy) + 0.5 * st.B2 * e.dM11dx;
}

inline ZeroDynCoeffs abc_from_station(const SliceStation& st, const StationEval& e,
                                      const Spring& spring) {
  ZeroDynCoeffs c;
  c.alpha = station_alpha(st, e);
  if (std::abs(c.alpha) < 1e-12)
    throw AlphaVanishes("alpha vanished at x=" + format_sig(st.x));
  c.beta = station_beta(st, e);
  c.zeta_s = st.zeta_s;
  c.zeta_u = st.B2 * e.Ugx - st.B1 * e.Ugy;
  c.theta = st.theta;
  const double s = spring.torque(st.theta);
  const double g1 = s * st.q4x + e.Ugx;
  const double g2 = s * st.q4y + e.Ugy;
  c.gamma = -st.B1 * g2 + st.B2 * g1;
  return c;
}

// Zero-dynamics coefficients at (x, height); gamma uses the supplied spring.
inline ZeroDynCoeffs abc(const MechanismModel& m, const MassParams& pm,
                         const Spring& spring, double x, double height,
                         double fd_scale = 1e-6) {
  const auto st = make_station(m, x, height, branch_guess(m, {x, height}), fd_scale);
  return abc_from_station(st, eval_station(st, pm), spring);
}

// gamma_hat(x): the gamma profile that makes the reference orbit an exact
// zero-dynamics solution.
inline double ideal_gamma_from(const SliceStation& st, const StationEval& e,
                               const PhaseMaps& maps) {
  const double alpha = station_alpha(st, e);
  const double beta = station_beta(st, e);
  return -alpha * maps.rho_dd(st.x) - beta * maps.rho_d(st.x);
}

inline double ideal_gamma(const MechanismModel& m, const MassParams& pm,
                          const PhaseMaps& maps, double x, double height,
                          double fd_scale = 1e-6) {
  const auto st = make_station(m, x, height, branch_guess(m, {x, height}), fd_scale);
  return ideal_gamma_from(st, eval_station(st, pm), maps);
}

// sigma(x): spring torque required at theta(x) so that gamma == gamma_hat.
inline double sigma_from(const SliceStation& st, const StationEval& e,
                         const PhaseMaps& maps) {
  if (std::abs(st.zeta_s) < 1e-9)
    throw ZetaSVanishes("zeta_s vanished at x=" + format_sig(st.x));
  const double zeta_u = st.B2 * e.Ugx - st.B1 * e.Ugy;
  return (ideal_gamma_from(st, e, maps) - zeta_u) / st.zeta_s;
}

// (theta, sigma) samples of the ideal spring characteristic at the given
// abscissae, in input order.
inline std::vector<std::array<double, 2>> ideal_spring_curve(
    const MechanismModel& m, const MassParams& pm, const PhaseMaps& maps,
    std::span<const double> xs, double height, double fd_scale = 1e-6) {
  std::vector<std::array<double, 2>> curve;
  curve.reserve(xs.size());
  std::optional<JointConfig> warm;
  for (const double x : xs) {
    if (!warm) warm = branch_guess(m, {x, height});
    const auto st = make_station(m, x, height, *warm, fd_scale);
    warm = st.q;
    curve.push_back({st.theta, sigma_from(st, eval_station(st, pm), maps)});
  }
  return curve;
}

// Feedforward torque that holds the height channel while the ideal spring
// drives the reference; C terms use the sample velocity, sigma the phase maps.
inline double nu_from(const SliceStation& st, const StationEval& e, double sigma,
                      double xdot) {
  const double v2 = xdot * xdot;
  const double c1 = 0.5 * e.dM11dx * v2;
  const double c2 = (e.dM12dx - 0.5 * e.dM11dy) * v2;
  const double g1 = sigma * st.q4x + e.Ugx;
  const double g2 = sigma * st.q4y + e.Ugy;
  const double den = e.M12 * st.B1 - e.M11 * st.B2;
  if (std::abs(den) < 1e-12)
    throw ZeroInputGain("linearizing torque denominator vanished at x=" + format_sig(st.x));
  return (e.M12 * (c1 + g1) - e.M11 * (c2 + g2)) / den;
}

inline double nu_on_reference(const MechanismModel& m, const MassParams& pm,
                              const PhaseMaps& maps, const RefSample& s, double height,
                              double fd_scale = 1e-6) {
  const auto st = make_station(m, s.pos, height, branch_guess(m, {s.pos, height}), fd_scale);
  const auto e = eval_station(st, pm);
  return nu_from(st, e, sigma_from(st, e, maps), s.vel);
}

// u_x = -f_y/g_y on the slice: the same torque computed through the full
// minimal-form assembly, used as the independent cross-check of nu.
inline double residual_torque(const MechanismModel& m, const MassParams& pm,
                              const Spring& spring, double x, double xdot, double height,
                              double fd_scale = 1e-6) {
  const auto d = accel_decomposition(m, pm, spring, {x, height}, {xdot, 0.0},
                                     branch_guess(m, {x, height}), fd_scale);
  return -d.f_y / d.g_y;
}

struct CenterReport {
  double r_x0 = 0;     // secant root of gamma_hat/alpha inside the bracket
  double omega_s = 0;  // finite-difference slope across the bracket
  double x1 = 0, x2 = 0;
};

// First adjacent pair (in input order) where gamma_hat/alpha changes sign.
inline CenterReport center_from_ratios(std::span<const double> x,
                                       std::span<const double> ratio) {
  if (x.size() != ratio.size() || x.size() < 2)
    throw std::invalid_argument("center scan needs matching arrays of at least 2 samples");
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    if (ratio[i] * ratio[i + 1] < 0.0) {
      const double slope = (ratio[i + 1] - ratio[i]) / (x[i + 1] - x[i]);
      CenterReport rep;
      rep.omega_s = slope;
      rep.r_x0 = x[i] - ratio[i] / slope;
      rep.x1 = x[i];
      rep.x2 = x[i + 1];
      return rep;
    }
  }
  throw NoEquilibrium("gamma_hat/alpha does not change sign across the samples");
}

inline CenterReport center_indicator(const MechanismModel& m, const MassParams& pm,
                                     const PhaseMaps& maps,
                                     std::span<const RefSample> samples, double height,
                                     double fd_scale = 1e-6) {
  std::vector<double> xs, ratios;
  xs.reserve(samples.size());
  ratios.reserve(samples.size());
  std::optional<JointConfig> warm;
  for (const auto& s : samples) {
    if (!warm) warm = branch_guess(m, {s.pos, height});
    const auto st = make_station(m, s.pos, height, *warm, fd_scale);
    warm = st.q;
    const auto e = eval_station(st, pm);
    const double alpha = station_alpha(st, e);
    if (std::abs(alpha) < 1e-12)
      throw AlphaVanishes("alpha vanished at x=" + format_sig(s.pos));
    xs.push_back(s.pos);
    ratios.push_back(ideal_gamma_from(st, e, maps) / alpha);
  }
  return center_from_ratios(xs, ratios);
}

// ---------------------------------------------------------------------------
// zero-dynamics integration

struct IntegrationOptions {
  double dt = 1e-4;
  double horizon = 1.0;
  double x_lo = -1e30, x_hi = 1e30;  // safety window
  double section_tol = 1e-6;         // |x - x0| tolerance on the xd = 0 section
};

struct ZeroDynTrajectory {
  std::vector<double> t, x, xdot;
  std::optional<double> period;  // first same-side return to the section, if seen
};

// Fixed-step RK4 for xdd = accel(x, xd) with crossing-refined period
// detection. Period detection requires the start to sit on the section
// (xdot0 = 0); otherwise the trajectory is returned without a period.
template <typename Accel>
ZeroDynTrajectory simulate_second_order(Accel&& accel, double x0, double xdot0,
                                        const IntegrationOptions& opts) {
  if (opts.dt == 0.0) throw std::invalid_argument("dt must be nonzero");
  const int steps = static_cast<int>(std::llround(std::abs(opts.horizon / opts.dt)));
  const double h = opts.horizon < 0 ? -std::abs(opts.dt) : std::abs(opts.dt);
  ZeroDynTrajectory traj;
  traj.t.reserve(steps + 1);
  traj.x.reserve(steps + 1);
  traj.xdot.reserve(steps + 1);

  double t = 0.0, x = x0, v = xdot0;
  double a = accel(x, v);
  const double depart = v != 0.0 ? (v > 0 ? 1.0 : -1.0) : (a > 0 ? 1.0 : -1.0);
  traj.t.push_back(t);
  traj.x.push_back(x);
  traj.xdot.push_back(v);

  auto guarded = [&](double xs, double vs) {
    if (!std::isfinite(xs) || xs < opts.x_lo || xs > opts.x_hi)
      throw Escape("zero dynamics left [" + format_sig(opts.x_lo) + ", " +
                   format_sig(opts.x_hi) + "] inside a step near t=" + format_sig(t));
    return accel(xs, vs);
  };
  for (int k = 0; k < steps; ++k) {
    const double k1x = v, k1v = a;
    const double k2x = v + 0.5 * h * k1v;
    const double k2v = guarded(x + 0.5 * h * k1x, v + 0.5 * h * k1v);
    const double k3x = v + 0.5 * h * k2v;
    const double k3v = guarded(x + 0.5 * h * k2x, v + 0.5 * h * k2v);
    const double k4x = v + h * k3v;
    const double k4v = guarded(x + h * k3x, v + h * k3v);
    const double x_new = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    const double v_new = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    if (!std::isfinite(x_new) || !std::isfinite(v_new))
      throw Escape("zero dynamics diverged at t=" + format_sig(t + h));
    if (x_new < opts.x_lo || x_new > opts.x_hi)
      throw Escape("zero dynamics left [" + format_sig(opts.x_lo) + ", " +
                   format_sig(opts.x_hi) + "] at t=" + format_sig(t + h));
    const double a_new = accel(x_new, v_new);

    if (!traj.period && v * v_new < 0.0) {
      // cubic Hermite refinement of the crossing inside the step
      auto hermite = [&](double w, double f0, double d0, double f1, double d1) {
        const double w2 = w * w, w3 = w2 * w;
        return (2 * w3 - 3 * w2 + 1) * f0 + (w3 - 2 * w2 + w) * h * d0 +
               (-2 * w3 + 3 * w2) * f1 + (w3 - w2) * h * d1;
      };
      double lo = 0.0, hi = 1.0, vlo = v;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double vm = hermite(mid, v, a, v_new, a_new);
        if (vlo * vm <= 0.0) {
          hi = mid;
        } else {
          lo = mid;
          vlo = vm;
        }
      }
      const double w = 0.5 * (lo + hi);
      const double x_cross = hermite(w, x, v, x_new, v_new);
      const double dir = v_new > 0 ? 1.0 : -1.0;
      if (dir == depart && std::abs(x_cross - x0) < opts.section_tol)
        traj.period = std::abs(t + w * h);
    }

    x = x_new;
    v = v_new;
    a = a_new;
    t += h;
    traj.t.push_back(t);
    traj.x.push_back(x);
    traj.xdot.push_back(v);
  }
  return traj;
}

// xdd = -(beta xd^2 + gamma)/alpha with warm-started stations along the sweep.
class ZeroDynField {
 public:
  ZeroDynField(const MechanismModel& m, const MassParams& pm, const Spring& spring,
               double height, double fd_scale = 1e-6)
      : model_(m), pm_(pm), spring_(spring), height_(height), fd_scale_(fd_scale) {}

  double operator()(double x, double xdot) {
    if (!warm_) warm_ = branch_guess(model_, {x, height_});
    const SliceStation st = make_station(model_, x, height_, *warm_, fd_scale_);
    warm_ = st.q;
    const StationEval e = eval_station(st, pm_);
    const double alpha = station_alpha(st, e);
    if (std::abs(alpha) < 1e-12)
      throw AlphaVanishes("alpha vanished at x=" + format_sig(x));
    const double beta = station_beta(st, e);
    const double s = spring_.torque(st.theta);
    const double gamma =
        st.B2 * (s * st.q4x + e.Ugx) - st.B1 * (s * st.q4y + e.Ugy);
    return -(beta * xdot * xdot + gamma) / alpha;
  }

 private:
  MechanismModel model_;
  MassParams pm_;
  Spring spring_;
  double height_, fd_scale_;
  std::optional<JointConfig> warm_;
};

inline ZeroDynTrajectory simulate_zero_dynamics(const MechanismModel& m,
                                                const MassParams& pm,
                                                const Spring& spring, double x0,
                                                double xdot0, double height,
                                                const IntegrationOptions& opts,
                                                double fd_scale = 1e-6) {
  ZeroDynField field(m, pm, spring, height, fd_scale);
  return simulate_second_order([&field](double x, double v) { return field(x, v); }, x0,
                               xdot0, opts);
}

}  // namespace zdshape
