#pragma once

// Torsional spring models at joint J5: a baseline linear spring combined with
// threshold-gated positive/negative sub-spring pairs, and tabulated
// torque-angle laws with the matching elastic potential.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "zdshape/csv.hpp"
#include "zdshape/log.hpp"

namespace zdshape {

struct EmptyTable : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonMonotoneAbscissa : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SubSpringPair {
  double k_pos = 0.0;      // Nm/rad, engages for theta >= theta_pos
  double theta_pos = 0.0;  // rad
  double k_neg = 0.0;      // Nm/rad, engages for theta <= theta_neg
  double theta_neg = 0.0;  // rad
};

// Parameter order in the flat form is
//   (k0, theta0, k1+, theta1+, k1-, theta1-, ..., kn+, thetan+, kn-, thetan-).
struct SpringParams {
  double k0 = 0.0;      // Nm/rad, baseline stiffness, >= 0
  double theta0 = 0.0;  // rad, baseline rest angle
  std::vector<SubSpringPair> pairs;

  std::size_t dimension() const { return 2 + 4 * pairs.size(); }

  std::vector<double> flatten() const {
    std::vector<double> v{k0, theta0};
    for (const auto& p : pairs) {
      v.push_back(p.k_pos);
      v.push_back(p.theta_pos);
      v.push_back(p.k_neg);
      v.push_back(p.theta_neg);
    }
    return v;
  }

  static SpringParams from_flat(std::span<const double> v) {
    if (v.size() < 2 || (v.size() - 2) % 4 != 0)
      throw std::invalid_argument("spring parameter vector must have size 2 + 4n");
    SpringParams p;
    p.k0 = v[0];
    p.theta0 = v[1];
    for (std::size_t i = 2; i + 3 < v.size(); i += 4)
      p.pairs.push_back({v[i], v[i + 1], v[i + 2], v[i + 3]});
    return p;
  }
};

inline double eval_spring(const SpringParams& p, double theta) {
  double s = p.k0 * (theta - p.theta0);
  for (const auto& pair : p.pairs) {
    if (theta >= pair.theta_pos) s += pair.k_pos * (theta - pair.theta_pos);
    if (theta <= pair.theta_neg) s += pair.k_neg * (theta - pair.theta_neg);
  }
  return s;
}

// Elastic potential of the piecewise-linear law (torque = dU/dtheta).
inline double spring_potential(const SpringParams& p, double theta) {
  auto half_sq = [](double k, double d) { return 0.5 * k * d * d; };
  double u = half_sq(p.k0, theta - p.theta0);
  for (const auto& pair : p.pairs) {
    if (theta >= pair.theta_pos) u += half_sq(pair.k_pos, theta - pair.theta_pos);
    if (theta <= pair.theta_neg) u += half_sq(pair.k_neg, theta - pair.theta_neg);
  }
  return u;
}

struct SpringBounds {
  double k_max = 10.0;  // Nm/rad, max |slope| of any element
  double theta_min = 0.0;
  double theta_max = 0.0;
};

inline std::vector<std::string> validate_params(const SpringParams& p,
                                                const SpringBounds& b) {
  std::vector<std::string> violations;
  auto in_theta = [&](double t) { return t >= b.theta_min && t <= b.theta_max; };
  if (p.k0 < 0.0) violations.push_back("k0 < 0");
  if (p.k0 > b.k_max) violations.push_back("k0 > k_max");
  if (!in_theta(p.theta0)) violations.push_back("theta0 outside [theta_min, theta_max]");
  for (std::size_t j = 0; j < p.pairs.size(); ++j) {
    const auto& pair = p.pairs[j];
    const std::string tag = "pair " + std::to_string(j + 1) + ": ";
    if (std::abs(pair.k_pos) > b.k_max) violations.push_back(tag + "|k+| > k_max");
    if (std::abs(pair.k_neg) > b.k_max) violations.push_back(tag + "|k-| > k_max");
    if (!in_theta(pair.theta_pos)) violations.push_back(tag + "theta+ outside range");
    if (!in_theta(pair.theta_neg)) violations.push_back(tag + "theta- outside range");
  }
  return violations;
}

// Scalar torque-angle law used by the dynamics. Either a parametric
// piecewise-linear characteristic or a tabulated one (linear interpolation
// between knots, constant hold outside the tabulated band).
class Spring {
 public:
  Spring() = default;  // zero spring

  static Spring zero() { return Spring(); }

  static Spring from_params(SpringParams p) {
    Spring s;
    s.params_ = std::move(p);
    s.kind_ = Kind::params;
    return s;
  }

  static Spring from_table(std::vector<double> theta, std::vector<double> torque) {
    if (theta.empty()) throw EmptyTable("spring table is empty");
    if (theta.size() != torque.size())
      throw std::invalid_argument("spring table column lengths differ");
    for (std::size_t i = 1; i < theta.size(); ++i)
      if (!(theta[i] > theta[i - 1]))
        throw NonMonotoneAbscissa("spring table abscissa not strictly increasing at knot " +
                                  std::to_string(i));
    auto t = std::make_shared<Table>();
    t->theta = std::move(theta);
    t->torque = std::move(torque);
    t->potential.assign(t->theta.size(), 0.0);
    for (std::size_t i = 1; i < t->theta.size(); ++i) {
      const double d = t->theta[i] - t->theta[i - 1];
      t->potential[i] = t->potential[i - 1] + 0.5 * (t->torque[i] + t->torque[i - 1]) * d;
    }
    Spring s;
    s.table_ = std::move(t);
    s.kind_ = Kind::table;
    return s;
  }

  double torque(double theta) const {
    switch (kind_) {
      case Kind::zero:
        return 0.0;
      case Kind::params:
        return eval_spring(params_, theta);
      case Kind::table:
        return table_lookup(theta).first;
    }
    return 0.0;
  }

  double potential(double theta) const {
    switch (kind_) {
      case Kind::zero:
        return 0.0;
      case Kind::params:
        return spring_potential(params_, theta);
      case Kind::table:
        return table_lookup(theta).second;
    }
    return 0.0;
  }

  bool is_table() const { return kind_ == Kind::table; }
  long extrapolation_count() const {
    return table_ ? table_->extrapolations.load() : 0;
  }

 private:
  enum class Kind { zero, params, table };

  struct Table {
    std::vector<double> theta, torque, potential;
    mutable std::atomic<long> extrapolations{0};
    mutable std::atomic<bool> warned{false};
  };

  std::pair<double, double> table_lookup(double theta) const {
    const auto& t = *table_;
    if (theta < t.theta.front() || theta > t.theta.back()) {
      t.extrapolations.fetch_add(1, std::memory_order_relaxed);
      if (!t.warned.exchange(true))
        log_warn("spring table queried outside [" + format_sig(t.theta.front()) + ", " +
                 format_sig(t.theta.back()) + "] at theta=" + format_sig(theta) +
                 "; holding the boundary torque");
      if (theta < t.theta.front())
        return {t.torque.front(),
                t.potential.front() + t.torque.front() * (theta - t.theta.front())};
      return {t.torque.back(),
              t.potential.back() + t.torque.back() * (theta - t.theta.back())};
    }
    const auto it = std::upper_bound(t.theta.begin(), t.theta.end(), theta);
    const std::size_t hi = std::min<std::size_t>(
        t.theta.size() - 1, static_cast<std::size_t>(it - t.theta.begin()));
    const std::size_t lo = hi == 0 ? 0 : hi - 1;
    if (hi == lo) return {t.torque[lo], t.potential[lo]};
    const double d = theta - t.theta[lo];
    const double slope = (t.torque[hi] - t.torque[lo]) / (t.theta[hi] - t.theta[lo]);
    return {t.torque[lo] + slope * d,
            t.potential[lo] + t.torque[lo] * d + 0.5 * slope * d * d};
  }

  Kind kind_ = Kind::zero;
  SpringParams params_;
  std::shared_ptr<const Table> table_;
};

// Linear-interpolation evaluator over strictly ascending (theta, torque)
// samples.
inline Spring tabulate_ideal(std::span<const std::array<double, 2>> samples) {
  if (samples.empty()) throw EmptyTable("spring table is empty");
  std::vector<double> theta, torque;
  theta.reserve(samples.size());
  torque.reserve(samples.size());
  for (const auto& s : samples) {
    theta.push_back(s[0]);
    torque.push_back(s[1]);
  }
  return Spring::from_table(std::move(theta), std::move(torque));
}

// Sorts raw (theta, torque) pairs and merges near-duplicate abscissae (the
// forward and backward passes of a symmetric trajectory revisit the same
// angles) before tabulating.
inline Spring make_sigma_spring(std::vector<std::array<double, 2>> samples) {
  if (samples.empty()) throw EmptyTable("spring table is empty");
  std::sort(samples.begin(), samples.end(),
            [](const auto& a, const auto& b) { return a[0] < b[0]; });
  const double span = samples.back()[0] - samples.front()[0];
  const double merge_tol = std::max(span, 1.0) * 1e-12;
  std::vector<std::array<double, 2>> merged;
  merged.reserve(samples.size());
  for (const auto& s : samples) {
    if (!merged.empty() && s[0] - merged.back()[0] <= merge_tol) continue;
    merged.push_back(s);
  }
  return tabulate_ideal(merged);
}

}  // namespace zdshape
