#pragma once

// Periodic horizontal reference trajectories r(t) = (r_x(t), height) with
// exactly two velocity zeros per period and time-reversal symmetry about
// each of them, plus the position-domain phase maps
//   rho_d(x) = velocity^2,  rho_dd(x) = acceleration
// built on the forward (velocity >= 0) half-period.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zdshape/csv.hpp"

namespace zdshape {

struct ExtraVelocityZeros : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InfeasibleTiming : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonMonotoneHalfPeriod : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ReferenceTrajectory {
  std::string family;
  double period = 0.0;  // s
  double height = 0.0;  // m, constant end-effector height
  std::function<double(double)> pos, vel, acc;
  double x_min = 0.0, x_max = 0.0;        // extremes over one period
  double t_at_min = 0.0, t_at_max = 0.0;  // velocity-zero instants in [0, period)

  double stroke() const { return x_max - x_min; }
};

struct RefSample {
  double t, pos, vel, acc;
};

// count samples over one period, endpoint-exclusive: t_i = i * period / count.
inline std::vector<RefSample> sample(const ReferenceTrajectory& ref, int count) {
  if (count < 2) throw std::invalid_argument("sample count must be >= 2");
  std::vector<RefSample> out;
  out.reserve(count);
  const double ts = ref.period / count;
  for (int i = 0; i < count; ++i) {
    const double t = i * ts;
    out.push_back({t, ref.pos(t), ref.vel(t), ref.acc(t)});
  }
  return out;
}

namespace detail {

// Locates the velocity zeros by scanning a half-step-offset grid (so exact
// grid-point zeros are never sampled) and bisecting each sign change.
// Requires exactly two zeros per period.
inline void locate_extremes(ReferenceTrajectory& ref) {
  const int grid = 8192;
  const double dt = ref.period / grid;
  std::vector<double> zeros;
  double t_prev = 0.5 * dt;
  double v_prev = ref.vel(t_prev);
  for (int i = 1; i <= grid; ++i) {
    const double t = (i + 0.5) * dt;
    const double v = ref.vel(t);
    if (v_prev == 0.0 || v_prev * v < 0.0) {
      double lo = t_prev, hi = t, vlo = v_prev;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double vm = ref.vel(mid);
        if (vlo * vm <= 0.0) {
          hi = mid;
        } else {
          lo = mid;
          vlo = vm;
        }
      }
      zeros.push_back(std::fmod(0.5 * (lo + hi), ref.period));
    }
    t_prev = t;
    v_prev = v;
  }
  if (zeros.size() != 2)
    throw ExtraVelocityZeros("reference velocity has " + std::to_string(zeros.size()) +
                             " zeros per period, expected 2");
  const double xa = ref.pos(zeros[0]);
  const double xb = ref.pos(zeros[1]);
  if (xa < xb) {
    ref.x_min = xa;
    ref.x_max = xb;
    ref.t_at_min = zeros[0];
    ref.t_at_max = zeros[1];
  } else {
    ref.x_min = xb;
    ref.x_max = xa;
    ref.t_at_min = zeros[1];
    ref.t_at_max = zeros[0];
  }
  if (!(ref.stroke() > 0.0))
    throw ExtraVelocityZeros("reference stroke is zero");
}

}  // namespace detail

// r_x(t) = c0 + sum_k c_k cos(2 pi k t / period): even in t, so the
// time-reversal symmetry holds by construction.
inline ReferenceTrajectory make_cosine_reference(double c0,
                                                 std::span<const double> harmonics,
                                                 double period, double height) {
  if (period <= 0.0) throw InfeasibleTiming("reference period must be > 0");
  bool any = false;
  for (double c : harmonics) any = any || c != 0.0;
  if (harmonics.empty() || !any)
    throw std::invalid_argument("cosine reference needs a nonzero harmonic coefficient");
  const std::vector<double> coeffs(harmonics.begin(), harmonics.end());
  const double w = 2.0 * std::numbers::pi / period;
  ReferenceTrajectory ref;
  ref.family = "cosine";
  ref.period = period;
  ref.height = height;
  ref.pos = [c0, coeffs, w](double t) {
    double x = c0;
    for (std::size_t k = 0; k < coeffs.size(); ++k)
      x += coeffs[k] * std::cos((k + 1) * w * t);
    return x;
  };
  ref.vel = [coeffs, w](double t) {
    double v = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k)
      v -= coeffs[k] * (k + 1) * w * std::sin((k + 1) * w * t);
    return v;
  };
  ref.acc = [coeffs, w](double t) {
    double a = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
      const double kw = (k + 1) * w;
      a -= coeffs[k] * kw * kw * std::cos(kw * t);
    }
    return a;
  };
  detail::locate_extremes(ref);
  return ref;
}

namespace detail {

// Jerk-limited displacement profile from rest to rest over [0, half]:
// constant acceleration, jerk-down corner, cruise, jerk-down corner,
// constant deceleration. Piecewise-cubic, hence C^2.
//
// The profile reaches the velocity zeros with full (nonzero) acceleration.
// The mirrored return keeps the acceleration continuous there (it is even
// about every turning instant), and the phase maps stay Lipschitz in x: a
// profile that ramps its acceleration to zero at the turnaround makes the
// acceleration behave like (x - x_turn)^(1/3) near the orbit ends, which no
// piecewise-linear map in x can follow.
struct ScurveHalf {
  struct Segment {
    double t0, x0, v0, a0, jerk;
  };
  std::vector<Segment> segments;
  double half = 0.0, travel = 0.0, v_peak = 0.0;

  ScurveHalf(double half_period, double travel_in, double cruise_fraction,
             double ramp_smoothing) {
    if (!(cruise_fraction > 0.0 && cruise_fraction < 1.0))
      throw InfeasibleTiming("cruise fraction must lie strictly inside (0, 1)");
    if (!(ramp_smoothing > 0.0 && ramp_smoothing <= 1.0))
      throw InfeasibleTiming("ramp smoothing must lie in (0, 1]");
    if (!(travel_in > 0.0)) throw InfeasibleTiming("x_max must exceed x_min");
    if (!(half_period > 0.0)) throw InfeasibleTiming("reference period must be > 0");
    half = half_period;
    travel = travel_in;
    const double t_cruise = cruise_fraction * half;
    const double t_ramp = 0.5 * (half - t_cruise);
    const double t_jerk = ramp_smoothing * t_ramp;  // smoothing of the inner corner
    const double t_acc = t_ramp - t_jerk;
    // travel = 2 * ramp distance + cruise distance, solved for the peak accel
    const double a_peak =
        travel / (t_acc * t_acc + 2.0 * t_acc * t_jerk + 2.0 / 3.0 * t_jerk * t_jerk +
                  (t_acc + 0.5 * t_jerk) * t_cruise);
    v_peak = a_peak * (t_acc + 0.5 * t_jerk);
    const double j = a_peak / t_jerk;
    const double durations[5] = {t_acc, t_jerk, t_cruise, t_jerk, t_acc};
    const double jerks[5] = {0.0, -j, 0.0, -j, 0.0};
    double t = 0.0, x = 0.0, v = 0.0, a = a_peak;
    for (int s = 0; s < 5; ++s) {
      segments.push_back({t, x, v, a, jerks[s]});
      const double d = durations[s];
      x += v * d + 0.5 * a * d * d + jerks[s] * d * d * d / 6.0;
      v += a * d + 0.5 * jerks[s] * d * d;
      a += jerks[s] * d;
      t += d;
    }
  }

  // state = (x, v, a) at tau in [0, half]
  void eval(double tau, double& x, double& v, double& a) const {
    tau = std::clamp(tau, 0.0, half);
    std::size_t s = segments.size() - 1;
    while (s > 0 && segments[s].t0 > tau) --s;
    const auto& seg = segments[s];
    const double d = tau - seg.t0;
    x = seg.x0 + seg.v0 * d + 0.5 * seg.a0 * d * d + seg.jerk * d * d * d / 6.0;
    v = seg.v0 + seg.a0 * d + 0.5 * seg.jerk * d * d;
    a = seg.a0 + seg.jerk * d;
  }
};

}  // namespace detail

// Smoothed trapezoidal velocity reference: forward sweep x_min -> x_max over
// the first half-period, mirrored return over the second.
inline ReferenceTrajectory make_scurve_reference(double x_min, double x_max,
                                                 double cruise_fraction,
                                                 double period, double height,
                                                 double ramp_smoothing = 0.5) {
  const auto profile = std::make_shared<detail::ScurveHalf>(
      0.5 * period, x_max - x_min, cruise_fraction, ramp_smoothing);
  auto state = [profile, x_min, x_max, period](double t, int deriv) {
    double tau = std::fmod(t, period);
    if (tau < 0.0) tau += period;
    double x, v, a;
    if (tau <= profile->half) {
      profile->eval(tau, x, v, a);
      const double out[3] = {x_min + x, v, a};
      return out[deriv];
    }
    profile->eval(tau - profile->half, x, v, a);
    const double out[3] = {x_max - x, -v, -a};
    return out[deriv];
  };
  ReferenceTrajectory ref;
  ref.family = "scurve";
  ref.period = period;
  ref.height = height;
  ref.pos = [state](double t) { return state(t, 0); };
  ref.vel = [state](double t) { return state(t, 1); };
  ref.acc = [state](double t) { return state(t, 2); };
  detail::locate_extremes(ref);
  return ref;
}

struct SymmetryReport {
  bool ok = false;
  double max_violation = 0.0;
};

// Checks r_x(t0 + t) = r_x(t0 - t) and vel(t0 + t) = -vel(t0 - t) around each
// velocity zero t0.
inline SymmetryReport check_symmetry(const ReferenceTrajectory& ref, double tol,
                                     int grid = 512) {
  double worst = 0.0;
  for (const double t0 : {ref.t_at_min, ref.t_at_max}) {
    for (int i = 1; i <= grid; ++i) {
      const double dt = 0.5 * ref.period * i / grid;
      worst = std::max(worst, std::abs(ref.pos(t0 + dt) - ref.pos(t0 - dt)));
      worst = std::max(worst, std::abs(ref.vel(t0 + dt) + ref.vel(t0 - dt)));
    }
  }
  return {worst <= tol, worst};
}

// Piecewise-linear maps x -> velocity^2 and x -> acceleration on
// [x_min, x_max]. Queries slightly outside the band (within 1e-9 stroke)
// clamp to the boundary; anything further is a domain error.
class PhaseMaps {
 public:
  PhaseMaps(std::vector<double> x, std::vector<double> rho_d_knots,
            std::vector<double> rho_dd_knots)
      : x_(std::move(x)), rho_d_(std::move(rho_d_knots)), rho_dd_(std::move(rho_dd_knots)) {
    margin_ = 1e-9 * (x_.back() - x_.front());
  }

  double rho_d(double x) const { return interp(rho_d_, x); }
  double rho_dd(double x) const { return interp(rho_dd_, x); }
  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }

 private:
  double interp(const std::vector<double>& y, double x) const {
    if (x < x_.front() - margin_ || x > x_.back() + margin_)
      throw std::domain_error("phase map queried at x=" + format_sig(x) +
                              " outside [" + format_sig(x_.front()) + ", " +
                              format_sig(x_.back()) + "]");
    x = std::clamp(x, x_.front(), x_.back());
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t hi = static_cast<std::size_t>(it - x_.begin());
    if (hi >= x_.size()) hi = x_.size() - 1;
    if (hi == 0) hi = 1;
    const std::size_t lo = hi - 1;
    const double w = (x - x_[lo]) / (x_[hi] - x_[lo]);
    return y[lo] + w * (y[hi] - y[lo]);
  }

  std::vector<double> x_, rho_d_, rho_dd_;
  double margin_ = 0.0;
};

// Samples the forward (velocity >= 0) half-period on a uniform time grid and
// builds the interpolants. The abscissa must be strictly increasing.
inline PhaseMaps phase_maps(const ReferenceTrajectory& ref, int resolution) {
  if (resolution < 2) throw std::invalid_argument("phase map resolution must be >= 2");
  const double t_start = ref.t_at_min;
  double t_end = ref.t_at_max;
  if (t_end <= t_start) t_end += ref.period;
  std::vector<double> x(resolution + 1), rd(resolution + 1), rdd(resolution + 1);
  for (int i = 0; i <= resolution; ++i) {
    const double t = t_start + (t_end - t_start) * i / resolution;
    const double v = ref.vel(t);
    x[i] = ref.pos(t);
    rd[i] = v * v;
    rdd[i] = ref.acc(t);
  }
  // the half-period endpoints are velocity zeros by construction
  rd.front() = 0.0;
  rd.back() = 0.0;
  for (int i = 1; i <= resolution; ++i)
    if (!(x[i] > x[i - 1]))
      throw NonMonotoneHalfPeriod("forward half-period not monotone near x=" +
                                  format_sig(x[i]));
  return PhaseMaps(std::move(x), std::move(rd), std::move(rdd));
}

}  // namespace zdshape
