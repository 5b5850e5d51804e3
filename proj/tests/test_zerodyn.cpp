#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "zdshape/optimize.hpp"
#include "zdshape/zerodyn.hpp"

using namespace zdshape;

namespace {

MechanismModel test_model() {
  MechanismModel m;
  m.anchor_J5 = {0.01, 0.04};
  return m;
}

ReferenceTrajectory cosine_ref() {
  const double harmonics[] = {0.03, 0.00375};
  return make_cosine_reference(0.010, harmonics, 0.5, 0.15);
}

Spring bent_spring() {
  SpringParams sp;
  sp.k0 = 1.3;
  sp.theta0 = 1.0;
  sp.pairs.push_back({2.0, 1.1, -0.6, 0.9});
  return Spring::from_params(sp);
}

}  // namespace

TEST_CASE("gamma splits into the spring gain and the gravity residual") {
  const MechanismModel m = test_model();
  const MassParams pm{0.08, 0.04, -0.03, 0.02};
  for (const Spring& s : {Spring::zero(), bent_spring()}) {
    for (const double x : {-0.01, 0.01, 0.03}) {
      const auto c = abc(m, pm, s, x, 0.15);
      CHECK(c.gamma ==
            Catch::Approx(c.zeta_s * s.torque(c.theta) + c.zeta_u).margin(1e-10));
    }
  }
}

TEST_CASE("gamma vanishes without spring and gravity") {
  MechanismModel m = test_model();
  m.gravity = 0.0;
  const auto c = abc(m, {0.05, 0.05, 0.01, 0.01}, Spring::zero(), 0.02, 0.15);
  CHECK(c.gamma == Catch::Approx(0.0).margin(1e-14));
  CHECK(c.zeta_u == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("zero dynamics identity holds under the linearizing torque") {
  const MechanismModel m = test_model();
  const MassParams pm{0.06, 0.02, -0.02, 0.01};
  const Spring s = bent_spring();
  for (const double x : {-0.005, 0.02, 0.035}) {
    for (const double xdot : {0.0, 0.25, -0.4}) {
      const auto c = abc(m, pm, s, x, 0.15);
      const auto d =
          accel_decomposition(m, pm, s, {x, 0.15}, {xdot, 0.0}, branch_guess(m, {x, 0.15}));
      const double u = -d.f_y / d.g_y;
      const double xdd = d.f_x + d.g_x * u;
      CHECK(c.alpha * xdd + c.beta * xdot * xdot + c.gamma ==
            Catch::Approx(0.0).margin(1e-6));
    }
  }
}

TEST_CASE("ideal gamma reduces to the acceleration term at the extremes") {
  const MechanismModel m = test_model();
  const auto ref = cosine_ref();
  const auto maps = phase_maps(ref, 1000);
  const MassParams pm{0.05, 0.0, -0.04, 0.0};
  const auto st = make_station(m, ref.x_max, ref.height, branch_guess(m, {ref.x_max, ref.height}));
  const auto e = eval_station(st, pm);
  const double gh = ideal_gamma_from(st, e, maps);
  CHECK(gh == Catch::Approx(-station_alpha(st, e) * maps.rho_dd(ref.x_max)).margin(1e-12));
  CHECK(maps.rho_d(ref.x_max) == 0.0);
  CHECK_THROWS_AS(ideal_gamma(m, pm, maps, ref.x_max + 0.01, ref.height), std::domain_error);
}

TEST_CASE("ideal gamma formula composes the phase maps as expected") {
  // frozen coefficients against the analytic sinusoid maps
  const double amplitude = 0.05, c0 = 0.0, period = 0.5;
  const double harmonics[] = {amplitude};
  const auto ref = make_cosine_reference(c0, harmonics, period, 0.15);
  const auto maps = phase_maps(ref, 2000);
  const double w2 = std::pow(2.0 * std::numbers::pi / period, 2);
  const double alpha = 2.0, beta = 0.0;
  for (int i = 1; i < 20; ++i) {
    const double x = ref.x_min + ref.stroke() * i / 20.0;
    const double gh = -alpha * maps.rho_dd(x) - beta * maps.rho_d(x);
    CHECK(gh == Catch::Approx(alpha * w2 * x).margin(1e-8));  // linear in x when beta = 0
  }
  const double beta2 = 1.5;
  const double x_probe = 0.017;
  const double gh2 = -alpha * maps.rho_dd(x_probe) - beta2 * maps.rho_d(x_probe);
  CHECK(gh2 == Catch::Approx(alpha * w2 * x_probe -
                             beta2 * w2 * (amplitude * amplitude - x_probe * x_probe))
                   .margin(1e-8));
}

TEST_CASE("ideal spring curve reconstructs gamma_hat pointwise") {
  const MechanismModel m = test_model();
  const auto ref = cosine_ref();
  const auto maps = phase_maps(ref, 1000);
  const MassParams pm{0.1, 0.0, -0.05, 0.01};
  const double xs[] = {-0.014, 0.0, 0.021, 0.043};
  const auto curve = ideal_spring_curve(m, pm, maps, xs, ref.height);
  REQUIRE(curve.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto st = make_station(m, xs[i], ref.height, branch_guess(m, {xs[i], ref.height}));
    const auto e = eval_station(st, pm);
    CHECK(curve[i][0] == Catch::Approx(st.theta).margin(1e-12));
    const double gh = ideal_gamma_from(st, e, maps);
    const double zeta_u = st.B2 * e.Ugx - st.B1 * e.Ugy;
    CHECK(st.zeta_s * curve[i][1] + zeta_u == Catch::Approx(gh).margin(1e-12));
  }
  // a single-point grid is a valid (degenerate) curve
  const double one[] = {0.01};
  CHECK(ideal_spring_curve(m, pm, maps, one, ref.height).size() == 1);
}

TEST_CASE("nu agrees with the residual torque through the tabulated ideal spring") {
  const MechanismModel m = test_model();
  const auto ref = cosine_ref();
  const int n = 1000;
  const auto maps = phase_maps(ref, n);
  const auto samples = sample(ref, n);
  const MassParams pm{0.07, 0.03, -0.04, 0.02};
  std::vector<double> xs;
  for (const auto& s : samples) xs.push_back(s.pos);
  const Spring sigma = make_sigma_spring(ideal_spring_curve(m, pm, maps, xs, ref.height));
  for (const std::size_t i : {7u, 333u, 512u, 941u}) {
    const double nu = nu_on_reference(m, pm, maps, samples[i], ref.height);
    const double ux =
        residual_torque(m, pm, sigma, samples[i].pos, samples[i].vel, ref.height);
    CHECK(nu == Catch::Approx(ux).margin(1e-9));
  }
}

TEST_CASE("nu at a velocity zero equals the row-wise inverse dynamics torque") {
  const MechanismModel m = test_model();
  const auto ref = cosine_ref();
  const auto maps = phase_maps(ref, 1000);
  const MassParams pm{0.09, 0.01, -0.02, 0.03};
  const RefSample s{0.0, ref.pos(0.0), ref.vel(0.0), ref.acc(0.0)};
  REQUIRE(std::abs(s.vel) < 1e-10);
  const double nu = nu_on_reference(m, pm, maps, s, ref.height);
  // independent route: row 1 of M xdd + G = B u with xdd = rho_dd, ydd = 0
  const auto st = make_station(m, s.pos, ref.height, branch_guess(m, {s.pos, ref.height}));
  const auto e = eval_station(st, pm);
  const double sigma = sigma_from(st, e, maps);
  const double u_row1 =
      (e.M11 * maps.rho_dd(s.pos) + sigma * st.q4x + e.Ugx) / st.B1;
  CHECK(nu == Catch::Approx(u_row1).margin(1e-8 * (1.0 + std::abs(u_row1))));
}

TEST_CASE("nu vanishes when gravity is off and the spring torque is zero at rest") {
  MechanismModel m = test_model();
  m.gravity = 0.0;
  const auto ref = cosine_ref();
  const auto st =
      make_station(m, ref.pos(0.0), ref.height, branch_guess(m, {ref.pos(0.0), ref.height}));
  const auto e = eval_station(st, {0.04, 0.02, 0.01, -0.01});
  CHECK(nu_from(st, e, 0.0, 0.0) == 0.0);
}

TEST_CASE("residual torque is even in the sweep velocity") {
  const MechanismModel m = test_model();
  const MassParams pm{0.05, 0.05, 0.0, 0.0};
  const Spring s = bent_spring();
  const double a = residual_torque(m, pm, s, 0.02, 0.37, 0.15);
  const double b = residual_torque(m, pm, s, 0.02, -0.37, 0.15);
  CHECK(a == b);
}

TEST_CASE("center scan: linear ratio gives unit slope and the exact root") {
  // dyadic grid so the secant arithmetic is exact
  const std::vector<double> x{-0.5, -0.25, 0.0, 0.25, 0.5};
  std::vector<double> ratio;
  for (const double xv : x) ratio.push_back(xv - 0.25);
  const auto rep = center_from_ratios(x, ratio);
  CHECK(rep.omega_s == 1.0);
  CHECK(rep.r_x0 == 0.25);
  CHECK(rep.x1 == 0.0);
  CHECK(rep.x2 == 0.25);
}

TEST_CASE("center scan: spec grid with the root at 0.1") {
  std::vector<double> x, ratio;
  for (int i = 0; i <= 10; ++i) {
    x.push_back(0.05 * i - 0.2);
    ratio.push_back(x.back() - 0.1);
  }
  const auto rep = center_from_ratios(x, ratio);
  CHECK(rep.omega_s == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(rep.r_x0 == Catch::Approx(0.1).margin(1e-12));
}

TEST_CASE("center scan: saddle and missing equilibrium") {
  const std::vector<double> x{-0.5, -0.25, 0.0, 0.25, 0.5};
  std::vector<double> saddle;
  for (const double xv : x) saddle.push_back(-(xv - 0.25));
  CHECK(center_from_ratios(x, saddle).omega_s == -1.0);
  const std::vector<double> positive{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK_THROWS_AS(center_from_ratios(x, positive), NoEquilibrium);
}

TEST_CASE("center indicator brackets the equilibrium of the real mechanism") {
  const MechanismModel m = test_model();
  const auto ref = cosine_ref();
  const auto maps = phase_maps(ref, 500);
  const auto samples = sample(ref, 500);
  const auto rep = center_indicator(m, MassParams{}, maps, samples, ref.height);
  CHECK(rep.omega_s > 0.0);
  CHECK(rep.r_x0 > ref.x_min);
  CHECK(rep.r_x0 < ref.x_max);
}

TEST_CASE("injected harmonic field: period and energy conservation") {
  IntegrationOptions io;
  io.dt = 1e-3;
  io.horizon = 20.0 * std::numbers::pi;
  io.x_lo = -10;
  io.x_hi = 10;
  const auto traj =
      simulate_second_order([](double x, double) { return -x; }, 1.0, 0.0, io);
  REQUIRE(traj.period.has_value());
  CHECK(*traj.period == Catch::Approx(2.0 * std::numbers::pi).margin(1e-5));
  double worst = 0.0;
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    const double e = 0.5 * traj.xdot[k] * traj.xdot[k] + 0.5 * traj.x[k] * traj.x[k];
    worst = std::max(worst, std::abs(e - 0.5));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("zero dynamics field is even in the sweep velocity, bitwise") {
  const MechanismModel m = test_model();
  ZeroDynField field(m, {0.06, 0.01, -0.02, 0.02}, bent_spring(), 0.15);
  const double a = field(0.02, 0.31);
  const double b = field(0.02, -0.31);
  CHECK(a == b);
}

TEST_CASE("forward and backward integration mirror from a velocity zero") {
  const MechanismModel m = test_model();
  const MassParams pm{0.05, 0.0, -0.03, 0.0};
  const Spring s = bent_spring();
  IntegrationOptions io;
  io.dt = 5e-5;
  io.horizon = 0.1;
  io.x_lo = -0.3;
  io.x_hi = 0.3;
  const auto fwd = simulate_zero_dynamics(m, pm, s, 0.02, 0.0, 0.15, io);
  io.horizon = -0.1;
  const auto bwd = simulate_zero_dynamics(m, pm, s, 0.02, 0.0, 0.15, io);
  REQUIRE(fwd.t.size() == bwd.t.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < fwd.t.size(); ++k)
    worst = std::max(worst, std::abs(fwd.x[k] - bwd.x[k]));
  CHECK(worst < 1e-7);
}

TEST_CASE("omega_s sign is invariant under a uniform mass rescale") {
  const MechanismModel m = test_model();
  MechanismModel scaled = m;
  const double c = 3.0;
  for (int i = 0; i < 4; ++i) {
    scaled.link_masses[i] *= c;
    scaled.link_inertias[i] *= c;
  }
  const auto ref = cosine_ref();
  const auto maps = phase_maps(ref, 400);
  const auto samples = sample(ref, 400);
  const MassParams pm{0.04, 0.02, -0.03, 0.01};
  const MassParams pm_scaled{c * 0.04, c * 0.02, -0.03, 0.01};
  const auto a = center_indicator(m, pm, maps, samples, ref.height);
  const auto b = center_indicator(scaled, pm_scaled, maps, samples, ref.height);
  CHECK((a.omega_s > 0) == (b.omega_s > 0));
}

TEST_CASE("alpha vanishing is detected at the zero-dynamics singularity") {
  MechanismModel m;  // origin anchor: alpha crosses zero inside the workspace
  m.anchor_J5 = {0.0, 0.0};
  auto alpha_at = [&](double x) {
    const auto st = make_station(m, x, 0.15, branch_guess(m, {x, 0.15}));
    return station_alpha(st, eval_station(st, MassParams{}));
  };
  double lo = 0.06, hi = 0.08;
  REQUIRE(alpha_at(lo) * alpha_at(hi) < 0.0);
  for (int i = 0; i < 80 && hi - lo > 1e-16; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (alpha_at(lo) * alpha_at(mid) <= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  const double x_singular = 0.5 * (lo + hi);
  CHECK(std::abs(alpha_at(x_singular)) < 1e-12);
  CHECK_THROWS_AS(abc(m, MassParams{}, Spring::zero(), x_singular, 0.15), AlphaVanishes);
}

TEST_CASE("escape window aborts a diverging integration") {
  IntegrationOptions io;
  io.dt = 1e-3;
  io.horizon = 10.0;
  io.x_lo = -2.0;
  io.x_hi = 2.0;
  CHECK_THROWS_AS(simulate_second_order([](double x, double) { return x; }, 1.0, 0.0, io),
                  Escape);
}
