#pragma once

// Planar kinematics of a four-link closed chain. The crank L1 is grounded and
// actuated at J1, the end-effector sits at J3 between the coupler L2 and L3,
// and L4 closes the loop at the spring-loaded ground joint J5. Joint angles
// are absolute link angles, measured CCW from +e_x, so the chain geometry is
//
//   J1 --L1--> J2 --L2--> J3 (end-effector) --L3--> J4 --L4--> J5.
//
// The loop-closure residual pins J5 to its ground anchor; on the closure
// manifold the configuration is a local function q(x, y) of the end-effector
// position, which is what solve_configuration and coordinate_jacobian expose.

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "zdshape/common.hpp"
#include "zdshape/csv.hpp"

namespace zdshape {

struct NonConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularJacobian : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Absolute link angles (rad, CCW from +e_x).
using JointConfig = Vec4;

struct MechanismModel {
  std::array<double, 4> link_lengths{0.080, 0.235, 0.052, 0.135};  // m
  std::array<double, 4> link_masses{0.071, 0.195, 0.049, 0.115};   // kg
  // about each link's centre of mass, kg m^2
  std::array<double, 4> link_inertias{0.747e-4, 10.413e-4, 0.345e-4, 2.430e-4};
  Vec2 base_J1{-0.19, 0.15};  // m, actuated ground joint
  Vec2 anchor_J5{0.0, 0.0};   // m, spring-loaded ground joint
  double gravity = 9.81;      // m/s^2, acting along -e_y

  double length_scale() const {
    return link_lengths[0] + link_lengths[1] + link_lengths[2] + link_lengths[3];
  }

  void validate() const {
    const char* names[4] = {"l1", "l2", "l3", "l4"};
    const char* mnames[4] = {"m1", "m2", "m3", "m4"};
    const char* jnames[4] = {"j1", "j2", "j3", "j4"};
    for (int i = 0; i < 4; ++i) {
      if (!(link_lengths[i] > 0.0))
        throw std::invalid_argument(std::string("mechanism.") + names[i] + " must be > 0");
      if (!(link_masses[i] > 0.0))
        throw std::invalid_argument(std::string("mechanism.") + mnames[i] + " must be > 0");
      if (link_inertias[i] < 0.0)
        throw std::invalid_argument(std::string("mechanism.") + jnames[i] + " must be >= 0");
    }
  }
};

inline Vec2 link_dir(double a) { return {std::cos(a), std::sin(a)}; }
// d(link_dir)/da
inline Vec2 link_normal(double a) { return {-std::sin(a), std::cos(a)}; }

// Position of the end-effector (joint J3).
inline Vec2 direct_kinematics(const MechanismModel& m, const JointConfig& q) {
  return m.base_J1 + m.link_lengths[0] * link_dir(q[0]) +
         m.link_lengths[1] * link_dir(q[1]);
}

// Closure residual: distance from the chain tip to the J5 anchor. Zero iff
// the chain closes.
inline Vec2 loop_residual(const MechanismModel& m, const JointConfig& q) {
  Vec2 p = m.base_J1;
  for (int i = 0; i < 4; ++i) p += m.link_lengths[i] * link_dir(q[i]);
  return p - m.anchor_J5;
}

inline Mat24 end_effector_jacobian(const MechanismModel& m, const JointConfig& q) {
  Mat24 jac = Mat24::Zero();
  jac.col(0) = m.link_lengths[0] * link_normal(q[0]);
  jac.col(1) = m.link_lengths[1] * link_normal(q[1]);
  return jac;
}

inline Mat24 loop_jacobian(const MechanismModel& m, const JointConfig& q) {
  Mat24 jac;
  for (int i = 0; i < 4; ++i) jac.col(i) = m.link_lengths[i] * link_normal(q[i]);
  return jac;
}

// Rows 0-1: d h / d q, rows 2-3: d phi / d q.
inline Mat4 stacked_jacobian(const MechanismModel& m, const JointConfig& q) {
  Mat4 jac;
  jac.topRows<2>() = end_effector_jacobian(m, q);
  jac.bottomRows<2>() = loop_jacobian(m, q);
  return jac;
}

// Spring displacement at J5; the spring is at rest when L4 points along -e_x.
inline double spring_angle(const MechanismModel&, const JointConfig& q) {
  return q[3] + std::numbers::pi;
}

namespace detail {

// One of the two intersections of circles (c0, r0) and (c1, r1); elbow = +1
// picks the point on the left of the ray c0 -> c1, elbow = -1 the right.
inline Vec2 circle_intersection(const Vec2& c0, double r0, const Vec2& c1,
                                double r1, int elbow) {
  const Vec2 d = c1 - c0;
  const double dist = d.norm();
  if (dist < 1e-15 || dist > r0 + r1 || dist < std::abs(r0 - r1))
    throw NonConvergence("circle intersection empty: point outside the reachable workspace");
  const double a = (dist * dist + r0 * r0 - r1 * r1) / (2.0 * dist);
  const double h2 = r0 * r0 - a * a;
  const double h = std::sqrt(h2 > 0.0 ? h2 : 0.0);
  const Vec2 e = d / dist;
  const Vec2 n{-e.y(), e.x()};
  return c0 + a * e + (elbow >= 0 ? h : -h) * n;
}

}  // namespace detail

// Analytic configuration guess for the working branch: the base dyad takes
// the elbow-up solution (q2 < 0) and the anchor dyad the elbow on the left of
// the ray from the end-effector to the anchor, which keeps q3, q4 in (-pi, 0)
// over the workspace used here.
inline JointConfig branch_guess(const MechanismModel& m, const Vec2& chi) {
  const Vec2 j2 = detail::circle_intersection(m.base_J1, m.link_lengths[0], chi,
                                              m.link_lengths[1], +1);
  const Vec2 j4 = detail::circle_intersection(chi, m.link_lengths[2], m.anchor_J5,
                                              m.link_lengths[3], +1);
  JointConfig q;
  q[0] = std::atan2(j2.y() - m.base_J1.y(), j2.x() - m.base_J1.x());
  q[1] = std::atan2(chi.y() - j2.y(), chi.x() - j2.x());
  q[2] = std::atan2(j4.y() - chi.y(), j4.x() - chi.x());
  q[3] = std::atan2(m.anchor_J5.y() - j4.y(), m.anchor_J5.x() - j4.x());
  return q;
}

struct SolveOptions {
  int max_iterations = 50;
  double tolerance_scale = 1e-12;  // residual tolerance relative to link scale
  int max_backtracks = 12;
};

// Damped Newton solve of h(q) = chi, phi(q) = 0 on the branch of q_guess.
inline JointConfig solve_configuration(const MechanismModel& m, const Vec2& chi,
                                       const JointConfig& q_guess,
                                       const SolveOptions& opts = {}) {
  const double tol = opts.tolerance_scale * m.length_scale();
  auto residual = [&](const JointConfig& qq) {
    Vec4 f;
    f.head<2>() = direct_kinematics(m, qq) - chi;
    f.tail<2>() = loop_residual(m, qq);
    return f;
  };
  JointConfig q = q_guess;
  Vec4 f = residual(q);
  double fnorm = f.norm();
  for (int it = 0; it < opts.max_iterations; ++it) {
    if (fnorm < tol) return q;
    const Mat4 jac = stacked_jacobian(m, q);
    const Eigen::FullPivLU<Mat4> lu(jac);
    if (!lu.isInvertible())
      throw SingularJacobian("kinematic jacobian singular at x=" + format_sig(chi.x()) +
                             " y=" + format_sig(chi.y()));
    const Vec4 dq = lu.solve(-f);
    double step = 1.0;
    bool accepted = false;
    for (int k = 0; k < opts.max_backtracks; ++k) {
      const JointConfig q_try = q + step * dq;
      const Vec4 f_try = residual(q_try);
      const double fn_try = f_try.norm();
      if (fn_try < fnorm) {
        q = q_try;
        f = f_try;
        fnorm = fn_try;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted)
      throw NonConvergence("newton stalled, residual " + format_sig(fnorm) +
                           " at x=" + format_sig(chi.x()) + " y=" + format_sig(chi.y()));
  }
  if (fnorm < tol) return q;
  throw NonConvergence("newton exceeded iteration cap, residual " + format_sig(fnorm) +
                       " at x=" + format_sig(chi.x()) + " y=" + format_sig(chi.y()));
}

// J = dq/dchi on the closure manifold, solving
//   [dh/dq; dphi/dq] J = [I2; 0].
// Row 0 is the input distribution (B1, B2) = dq1/d(x, y).
inline Mat42 coordinate_jacobian(const MechanismModel& m, const JointConfig& q) {
  const Mat4 jac = stacked_jacobian(m, q);
  const Eigen::FullPivLU<Mat4> lu(jac);
  if (!lu.isInvertible())
    throw SingularJacobian("kinematic jacobian singular in coordinate_jacobian");
  Mat42 rhs = Mat42::Zero();
  rhs(0, 0) = 1.0;
  rhs(1, 1) = 1.0;
  return lu.solve(rhs);
}

// Spring displacement as a function of the workspace point.
inline double eta(const MechanismModel& m, const Vec2& chi, const JointConfig& q_guess) {
  return spring_angle(m, solve_configuration(m, chi, q_guess));
}

}  // namespace zdshape
