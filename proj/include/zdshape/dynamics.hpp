#pragma once

// Euler-Lagrange data of the closed chain in joint space, with optional added
// point masses on links L3 and L4, and its projection to the minimal form in
// workspace coordinates (x, y):
//
//   M(chi) chidot' + C(chi, chidot) chidot + G(chi) = B(chi) u.
//
// M, G, B come from congruence with the coordinate jacobian dq/dchi; the
// Coriolis components fold the central-difference partials of M, with the
// closure constraint re-solved at every probe point.

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zdshape/mechanism.hpp"
#include "zdshape/spring.hpp"

namespace zdshape {

struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ZeroInputGain : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MassParams {
  double m_a3 = 0.0;    // kg, added mass on L3
  double m_a4 = 0.0;    // kg, added mass on L4
  double delta3 = 0.0;  // m, offset from the link midpoint, + toward J3
  double delta4 = 0.0;  // m, offset from the link midpoint, + toward J4

  std::array<double, 4> flatten() const { return {m_a3, m_a4, delta3, delta4}; }
  static MassParams from_flat(std::span<const double> v) {
    if (v.size() != 4) throw std::invalid_argument("mass parameter vector must have size 4");
    return {v[0], v[1], v[2], v[3]};
  }
};

struct MassBounds {
  double mass_max = 0.1;    // kg
  double offset_max = 0.05;  // m
};

// Per-gene box for (m_a3, m_a4, delta3, delta4). The masses ride the
// longitudinal axis of their link, so the offset box is independent of the
// link length (the optimum routinely sits past the distal joint).
inline std::array<std::array<double, 2>, 4> mass_param_box(const MechanismModel&,
                                                           const MassBounds& b) {
  return {{{0.0, b.mass_max},
           {0.0, b.mass_max},
           {-b.offset_max, b.offset_max},
           {-b.offset_max, b.offset_max}}};
}

inline std::vector<std::string> validate_mass_params(const MassParams& p,
                                                     const MechanismModel& m,
                                                     const MassBounds& b) {
  std::vector<std::string> violations;
  const auto box = mass_param_box(m, b);
  const auto v = p.flatten();
  const char* names[4] = {"m_a3", "m_a4", "delta3", "delta4"};
  for (int i = 0; i < 4; ++i) {
    if (v[i] < box[i][0] || v[i] > box[i][1])
      violations.push_back(std::string(names[i]) + " = " + format_sig(v[i]) +
                           " outside [" + format_sig(box[i][0]) + ", " +
                           format_sig(box[i][1]) + "]");
  }
  return violations;
}

// Distance of the added mass from the proximal joint of `link`.
inline double added_mass_arm(const MechanismModel& m, int link, double delta) {
  return 0.5 * m.link_lengths[link] - delta;
}

// 2x4 velocity jacobian of a point riding `link` at distance `arm` from the
// link's proximal joint.
inline Mat24 point_jacobian(const MechanismModel& m, const JointConfig& q, int link,
                            double arm) {
  Mat24 jac = Mat24::Zero();
  for (int j = 0; j < link; ++j) jac.col(j) = m.link_lengths[j] * link_normal(q[j]);
  jac.col(link) = arm * link_normal(q[link]);
  return jac;
}

inline Vec2 point_on_link(const MechanismModel& m, const JointConfig& q, int link,
                          double arm) {
  Vec2 p = m.base_J1;
  for (int j = 0; j < link; ++j) p += m.link_lengths[j] * link_dir(q[j]);
  return p + arm * link_dir(q[link]);
}

// Joint-space inertia: per-link centroid translation + rotation, plus the two
// added point masses.
inline Mat4 joint_inertia(const MechanismModel& m, const MassParams& pm,
                          const JointConfig& q) {
  Mat4 inertia = Mat4::Zero();
  for (int i = 0; i < 4; ++i) {
    const Mat24 jc = point_jacobian(m, q, i, 0.5 * m.link_lengths[i]);
    inertia.noalias() += m.link_masses[i] * (jc.transpose() * jc);
    inertia(i, i) += m.link_inertias[i];
  }
  const double masses[2] = {pm.m_a3, pm.m_a4};
  const double offsets[2] = {pm.delta3, pm.delta4};
  for (int k = 0; k < 2; ++k) {
    if (masses[k] == 0.0) continue;
    const int link = 2 + k;
    const Mat24 ja = point_jacobian(m, q, link, added_mass_arm(m, link, offsets[k]));
    inertia.noalias() += masses[k] * (ja.transpose() * ja);
  }
  return inertia;
}

inline double gravity_potential(const MechanismModel& m, const MassParams& pm,
                                const JointConfig& q) {
  double u = 0.0;
  for (int i = 0; i < 4; ++i)
    u += m.link_masses[i] * point_on_link(m, q, i, 0.5 * m.link_lengths[i]).y();
  if (pm.m_a3 != 0.0)
    u += pm.m_a3 * point_on_link(m, q, 2, added_mass_arm(m, 2, pm.delta3)).y();
  if (pm.m_a4 != 0.0)
    u += pm.m_a4 * point_on_link(m, q, 3, added_mass_arm(m, 3, pm.delta4)).y();
  return m.gravity * u;
}

// dU_g/dq: the y-rows of the point jacobians weighted by mass and gravity.
inline Vec4 joint_gravity_grad(const MechanismModel& m, const MassParams& pm,
                               const JointConfig& q) {
  Vec4 grad = Vec4::Zero();
  for (int i = 0; i < 4; ++i)
    grad += m.link_masses[i] *
            point_jacobian(m, q, i, 0.5 * m.link_lengths[i]).row(1).transpose();
  if (pm.m_a3 != 0.0)
    grad += pm.m_a3 *
            point_jacobian(m, q, 2, added_mass_arm(m, 2, pm.delta3)).row(1).transpose();
  if (pm.m_a4 != 0.0)
    grad += pm.m_a4 *
            point_jacobian(m, q, 3, added_mass_arm(m, 3, pm.delta4)).row(1).transpose();
  return m.gravity * grad;
}

struct MinimalFormPoint {
  double M11 = 0, M12 = 0, M22 = 0;
  double dM11dx = 0, dM12dx = 0, dM22dx = 0;
  double dM11dy = 0, dM12dy = 0, dM22dy = 0;
  double C1 = 0, C2 = 0;  // Coriolis/centrifugal torque components (already velocity-folded)
  double G1 = 0, G2 = 0;  // gravity + elasticity gradient
  double B1 = 0, B2 = 0;  // input distribution dq1/d(x, y)
  double theta = 0;       // spring displacement at this configuration
  JointConfig q;

  double det() const { return M11 * M22 - M12 * M12; }
  Mat2 inertia() const {
    Mat2 m;
    m << M11, M12, M12, M22;
    return m;
  }
};

namespace detail {

inline std::array<double, 3> projected_inertia(const MechanismModel& m,
                                               const MassParams& pm,
                                               const JointConfig& q, const Mat42& jac) {
  const Mat4 mq = joint_inertia(m, pm, q);
  const Vec4 c1 = jac.col(0), c2 = jac.col(1);
  const Vec4 mc1 = mq * c1, mc2 = mq * c2;
  return {c1.dot(mc1), c1.dot(mc2), c2.dot(mc2)};
}

}  // namespace detail

// Minimal-form data at (chi, chidot). The fd_scale sets the central-difference
// step for the inertia partials as a fraction of the total chain length.
inline MinimalFormPoint minimal_point(const MechanismModel& m, const MassParams& pm,
                                      const Spring& spring, const Vec2& chi,
                                      const Vec2& chidot, const JointConfig& q_guess,
                                      double fd_scale = 1e-6) {
  MinimalFormPoint out;
  out.q = solve_configuration(m, chi, q_guess);
  const Mat42 jac = coordinate_jacobian(m, out.q);
  const auto mc = detail::projected_inertia(m, pm, out.q, jac);
  out.M11 = mc[0];
  out.M12 = mc[1];
  out.M22 = mc[2];
  if (!(out.M11 > 0.0) || !(out.det() > 0.0))
    throw NotPositiveDefinite("projected inertia not positive definite at x=" +
                              format_sig(chi.x()) + " y=" + format_sig(chi.y()));

  const double delta = fd_scale * m.length_scale();
  auto probe = [&](const Vec2& at) {
    const JointConfig qp = solve_configuration(m, at, out.q);
    return detail::projected_inertia(m, pm, qp, coordinate_jacobian(m, qp));
  };
  const auto mxp = probe(chi + Vec2{delta, 0.0});
  const auto mxm = probe(chi - Vec2{delta, 0.0});
  const auto myp = probe(chi + Vec2{0.0, delta});
  const auto mym = probe(chi - Vec2{0.0, delta});
  const double inv2d = 1.0 / (2.0 * delta);
  out.dM11dx = (mxp[0] - mxm[0]) * inv2d;
  out.dM12dx = (mxp[1] - mxm[1]) * inv2d;
  out.dM22dx = (mxp[2] - mxm[2]) * inv2d;
  out.dM11dy = (myp[0] - mym[0]) * inv2d;
  out.dM12dy = (myp[1] - mym[1]) * inv2d;
  out.dM22dy = (myp[2] - mym[2]) * inv2d;

  out.theta = spring_angle(m, out.q);
  Vec4 gq = joint_gravity_grad(m, pm, out.q);
  gq[3] += spring.torque(out.theta);
  out.G1 = jac.col(0).dot(gq);
  out.G2 = jac.col(1).dot(gq);
  out.B1 = jac(0, 0);
  out.B2 = jac(0, 1);

  const double xd = chidot.x(), yd = chidot.y();
  out.C1 = 0.5 * out.dM11dx * xd * xd + out.dM11dy * xd * yd +
           (out.dM12dy - 0.5 * out.dM22dx) * yd * yd;
  out.C2 = (out.dM12dx - 0.5 * out.dM11dy) * xd * xd + out.dM22dx * xd * yd +
           0.5 * out.dM22dy * yd * yd;
  return out;
}

struct AccelDecomposition {
  double f_x = 0, g_x = 0;  // drift and input gain of the x channel
  double f_y = 0, g_y = 0;
};

inline AccelDecomposition decompose(const MinimalFormPoint& p) {
  const double den = p.det();
  AccelDecomposition d;
  d.f_x = (-p.M22 * (p.C1 + p.G1) + p.M12 * (p.C2 + p.G2)) / den;
  d.g_x = (p.M22 * p.B1 - p.M12 * p.B2) / den;
  d.f_y = (p.M12 * (p.C1 + p.G1) - p.M11 * (p.C2 + p.G2)) / den;
  d.g_y = -(p.M12 * p.B1 - p.M11 * p.B2) / den;
  if (std::abs(d.g_y) < 1e-9)
    throw ZeroInputGain("height-channel input gain vanished (g_y = " +
                        format_sig(d.g_y) + ")");
  return d;
}

inline AccelDecomposition accel_decomposition(const MechanismModel& m,
                                              const MassParams& pm, const Spring& spring,
                                              const Vec2& chi, const Vec2& chidot,
                                              const JointConfig& q_guess,
                                              double fd_scale = 1e-6) {
  return decompose(minimal_point(m, pm, spring, chi, chidot, q_guess, fd_scale));
}

}  // namespace zdshape
