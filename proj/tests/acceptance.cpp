// Acceptance suite: runs the full pipeline on both bundled configurations and
// verifies every top-level behavioural guarantee, printing one line per
// criterion. Exit code is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "zdshape/commands.hpp"
#include "zdshape/pipeline.hpp"

using namespace zdshape;
namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int criterion, bool ok, const std::string& text) {
  std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, text.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(double v) { return format_sig(v); }

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <configs_dir> <out_dir>\n");
    return 64;
  }
  const fs::path configs = argv[1];
  const fs::path out = argv[2];
  fs::create_directories(out);

  const auto cfg1 = ConfigFile::load(configs / "dual_speed_cosine.cfg");
  const auto cfg2 = ConfigFile::load(configs / "trapezoid_scurve.cfg");

  std::printf("running pipeline on dual_speed_cosine...\n");
  std::fflush(stdout);
  PipelineOverrides ov1;
  ov1.output_dir = out / "dual_speed_cosine";
  const RunReport rep1 = run_pipeline(cfg1, ov1);
  const PipelineConfig pc1 = PipelineConfig::from_config(cfg1);
  const ReferenceTrajectory ref1 = pc1.build_reference();

  std::printf("running pipeline on trapezoid_scurve...\n");
  std::fflush(stdout);
  PipelineOverrides ov2;
  ov2.output_dir = out / "trapezoid_scurve";
  const RunReport rep2 = run_pipeline(cfg2, ov2);
  const PipelineConfig pc2 = PipelineConfig::from_config(cfg2);
  const ReferenceTrajectory ref2 = pc2.build_reference();

  // ------------------------------------------------------------------
  // 1. inversion round-trip: the tabulated ideal spring regenerates the
  //    reference orbit through the zero dynamics
  {
    bool ok = true;
    std::string detail;
    for (const auto* item : {&rep1, &rep2}) {
      const auto& rep = *item;
      const auto& pc = (&rep == &rep1) ? pc1 : pc2;
      const auto& ref = (&rep == &rep1) ? ref1 : ref2;
      const Spring sigma = make_sigma_spring(rep.mass.sigma_star);
      IntegrationOptions io;
      io.dt = ref.period / pc.sim_dt_divisor;
      io.horizon = ref.period;
      io.x_lo = ref.x_min - pc.escape_margin * ref.stroke();
      io.x_hi = ref.x_max + pc.escape_margin * ref.stroke();
      const auto t0 = clock_type::now();
      double frac = std::numeric_limits<double>::infinity();
      try {
        const auto zd = simulate_zero_dynamics(pc.mechanism, rep.mass.best, sigma,
                                               ref.pos(0.0), ref.vel(0.0), ref.height, io);
        double worst = 0.0;
        for (std::size_t k = 0; k < zd.t.size(); ++k)
          worst = std::max(worst, std::abs(zd.x[k] - ref.pos(zd.t[k])));
        frac = worst / ref.stroke();
      } catch (const std::exception&) {
      }
      const double elapsed = seconds_since(t0);
      ok = ok && frac < 1e-3 && elapsed < 10.0;
      detail += rep.ref_family + ": max error " + fmt(frac) + " of stroke in " +
                fmt(elapsed) + " s; ";
    }
    verdict(1, ok, "inversion round-trip < 1e-3 stroke within 10 s (" + detail + ")");
  }

  // ------------------------------------------------------------------
  // 2. RMS reduction: optimized strictly below baseline, at least 10 %
  {
    bool ok = true;
    std::string detail;
    for (const auto* rep : {&rep1, &rep2}) {
      const double reduction = 100.0 * (1.0 - rep->mass.rms_optimized / rep->mass.rms_baseline);
      ok = ok && rep->mass.rms_optimized < rep->mass.rms_baseline && reduction >= 10.0;
      detail += rep->ref_family + ": " + fmt(rep->mass.rms_optimized) + " vs " +
                fmt(rep->mass.rms_baseline) + " Nm (-" + fmt(reduction) + "%)";
      if (rep->expected_rms && rep->expected_baseline_rms)
        detail += " [published: " + fmt(*rep->expected_rms) + " vs " +
                  fmt(*rep->expected_baseline_rms) + "]";
      detail += "; ";
    }
    verdict(2, ok, "optimized RMS below baseline by >= 10% (" + detail + ")");
  }

  // ------------------------------------------------------------------
  // 3. spring-fit monotonicity in the pair count (first configuration)
  {
    bool ok = rep1.fits.size() == 3;
    std::string detail;
    for (std::size_t i = 0; i < rep1.fits.size(); ++i) {
      const auto& f = rep1.fits[i];
      detail += "n=" + std::to_string(f.n_pairs) + ": mse " + fmt(f.fit.mean_square_error) +
                ", dev " + fmt(f.metrics.position_error_fraction) + "; ";
      if (i > 0) {
        ok = ok && f.fit.mean_square_error <= rep1.fits[i - 1].fit.mean_square_error;
        ok = ok && f.metrics.position_error_fraction <=
                       rep1.fits[i - 1].metrics.position_error_fraction;
      }
      ok = ok && !f.metrics.zero_dyn_fault;
    }
    verdict(3, ok, "fit error and orbit deviation non-increasing in n (" + detail + ")");
  }

  // ------------------------------------------------------------------
  // 4. center condition: omega_s positive for every returned design, and the
  //    discrete indicator is exact on a linear profile
  {
    std::vector<double> xs, ratios;
    for (int i = 0; i <= 8; ++i) {
      xs.push_back(-0.5 + 0.125 * i);  // dyadic grid: exact arithmetic
      ratios.push_back(xs.back() - 0.25);
    }
    const auto stub = center_from_ratios(xs, ratios);
    const bool ok = rep1.mass.center.omega_s > 0.0 && rep2.mass.center.omega_s > 0.0 &&
                    stub.omega_s == 1.0 && stub.r_x0 == 0.25;
    verdict(4, ok,
            "omega_s > 0 for both designs (" + fmt(rep1.mass.center.omega_s) + ", " +
                fmt(rep2.mass.center.omega_s) + "); linear stub gives omega_s = " +
                fmt(stub.omega_s) + " exactly");
  }

  // ------------------------------------------------------------------
  // 5. orbit symmetry: forward/backward integration from a velocity zero
  {
    const Spring sigma = make_sigma_spring(rep1.mass.sigma_star);
    IntegrationOptions io;
    io.dt = ref1.period / pc1.sim_dt_divisor;
    io.horizon = 0.5 * ref1.period;
    io.x_lo = ref1.x_min - 0.3 * ref1.stroke();
    io.x_hi = ref1.x_max + 0.3 * ref1.stroke();
    const auto fwd = simulate_zero_dynamics(pc1.mechanism, rep1.mass.best, sigma,
                                            ref1.pos(0.0), 0.0, ref1.height, io);
    io.horizon = -io.horizon;
    const auto bwd = simulate_zero_dynamics(pc1.mechanism, rep1.mass.best, sigma,
                                            ref1.pos(0.0), 0.0, ref1.height, io);
    double worst = 0.0;
    for (std::size_t k = 0; k < fwd.t.size() && k < bwd.t.size(); ++k)
      worst = std::max(worst, std::abs(fwd.x[k] - bwd.x[k]));
    verdict(5, worst < 1e-7,
            "mirror deviation " + fmt(worst) + " m over half a period");
  }

  // ------------------------------------------------------------------
  // 6. oracle equivalences
  {
    const auto t0 = clock_type::now();
    const auto& model = pc1.mechanism;
    const MassParams pm = rep1.mass.best;
    bool ok = true;
    std::string detail;

    // kinetic-energy projection identity
    {
      double worst = 0.0;
      for (const double x : {-0.01, 0.01, 0.03}) {
        const Vec2 chi{x, ref1.height};
        const Vec2 cd{0.31, -0.12};
        const auto p = minimal_point(model, pm, Spring::zero(), chi, cd,
                                     branch_guess(model, chi));
        const Vec4 qdot = coordinate_jacobian(model, p.q) * cd;
        const double ke_chi = 0.5 * (p.M11 * cd.x() * cd.x() + 2 * p.M12 * cd.x() * cd.y() +
                                     p.M22 * cd.y() * cd.y());
        const double ke_q = 0.5 * qdot.dot(joint_inertia(model, pm, p.q) * qdot);
        worst = std::max(worst, std::abs(ke_chi - ke_q) / std::abs(ke_q));
      }
      ok = ok && worst < 1e-10;
      detail += "KE proj " + fmt(worst) + "; ";
    }
    // coordinate jacobian vs finite differences
    {
      double worst = 0.0;
      const Vec2 chi{0.02, ref1.height};
      const JointConfig q = solve_configuration(model, chi, branch_guess(model, chi));
      const Mat42 jac = coordinate_jacobian(model, q);
      const double delta = 1e-7;
      for (int axis = 0; axis < 2; ++axis) {
        Vec2 step = Vec2::Zero();
        step[axis] = delta;
        const Vec4 fd = (solve_configuration(model, chi + step, q) -
                         solve_configuration(model, chi - step, q)) /
                        (2 * delta);
        worst = std::max(worst, (fd - jac.col(axis)).norm() / jac.norm());
      }
      ok = ok && worst < 1e-6;
      detail += "jac FD " + fmt(worst) + "; ";
    }
    // gamma split identity
    {
      const Spring springs[] = {make_sigma_spring(rep1.mass.sigma_star), Spring::zero()};
      double worst = 0.0;
      for (const double x : {-0.012, 0.005, 0.04}) {
        for (const Spring& spring : springs) {
          const auto c = abc(model, pm, spring, x, ref1.height);
          worst = std::max(
              worst, std::abs(c.gamma - (c.zeta_s * spring.torque(c.theta) + c.zeta_u)));
        }
      }
      ok = ok && worst < 1e-10;
      detail += "gamma split " + fmt(worst) + "; ";
    }
    // height channel stays a double integrator at zero input
    {
      ok = ok && rep1.sigma_metrics.max_height_accel < 1e-6 &&
           rep2.sigma_metrics.max_height_accel < 1e-6;
      detail += "max |ydd| " + fmt(std::max(rep1.sigma_metrics.max_height_accel,
                                            rep2.sigma_metrics.max_height_accel)) +
                "; ";
    }
    // energy balance of a free swing about the centered equilibrium
    {
      const Spring sigma = make_sigma_spring(rep1.mass.sigma_star);
      SimOptions so;
      so.dt = ref1.period / pc1.sim_dt_divisor;
      so.horizon = ref1.period;
      so.height = ref1.height;
      so.x_lo = ref1.x_min - ref1.stroke();
      so.x_hi = ref1.x_max + ref1.stroke();
      so.y_margin = 0.1;
      const Vec2 start{rep1.mass.center.r_x0 + 0.2 * ref1.stroke(), ref1.height};
      const auto swing = simulate_free(model, pm, sigma, start, {0.0, 0.0}, so);
      const double e0 = swing.e_kin.empty() ? 0.0 : swing.e_kin[0] + swing.e_pot[0];
      const double resid = energy_audit(swing, model, pm, sigma);
      const bool swing_ok =
          !swing.fault && resid < 1e-5 * std::max(std::abs(e0), 1.0);
      ok = ok && swing_ok;
      detail += "energy residual " + fmt(resid) + " vs |E0| " + fmt(std::abs(e0));
    }
    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < 60.0;
    verdict(6, ok, "oracle equivalences (" + detail + ") in " + fmt(elapsed) + " s");
  }

  // ------------------------------------------------------------------
  // 7. determinism: byte-identical numerics across worker counts
  {
    PipelineOverrides a, b;
    a.output_dir = out / "det_w1";
    a.workers = 1;
    b.output_dir = out / "det_w2";
    b.workers = 2;
    const RunReport ra = run_pipeline(cfg2, a);
    const RunReport rb = run_pipeline(cfg2, b);
    const std::string ja = ra.to_json(false).dump(2);
    const std::string jb = rb.to_json(false).dump(2);
    bool ok = ja == jb;
    std::ifstream fa(out / "det_w1" / "sigma_star.csv"), fb(out / "det_w2" / "sigma_star.csv");
    const std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    ok = ok && !ca.empty() && ca == cb;
    verdict(7, ok, std::string("pipeline numerics byte-identical for workers 1 vs 2 (") +
                       (ok ? "reports and sigma tables match" : "MISMATCH") + ")");
  }

  std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
