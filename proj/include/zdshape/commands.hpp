#pragma once

// Library backing of the CLI subcommands besides `run`: the invariant check
// suite over a configuration, the standalone spring fit from a saved sigma
// table, and the re-simulation of a finished design from its run report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "zdshape/pipeline.hpp"

namespace zdshape {

// Invariant suite over a configuration; prints one pass/fail line per check.
inline bool run_checks(const ConfigFile& cfg_file, std::ostream& out) {
  bool all_ok = true;
  auto check = [&](const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "[PASS] " : "[FAIL] ") << name;
    if (!detail.empty()) out << " (" << detail << ")";
    out << "\n";
    all_ok = all_ok && ok;
  };

  PipelineConfig pc;
  try {
    pc = PipelineConfig::from_config(cfg_file);
    check("config parses", true, "");
  } catch (const std::exception& ex) {
    check("config parses", false, ex.what());
    return false;
  }
  const auto& model = pc.mechanism;

  ReferenceTrajectory ref;
  try {
    ref = pc.build_reference();
    check("reference constructs", true,
          "window [" + format_sig(ref.x_min) + ", " + format_sig(ref.x_max) + "]");
  } catch (const std::exception& ex) {
    check("reference constructs", false, ex.what());
    return false;
  }
  const auto sym = check_symmetry(ref, 1e-9);
  check("time-reversal symmetry", sym.ok, "max violation " + format_sig(sym.max_violation));

  const auto samples = sample(ref, pc.n_samples);
  PhaseMaps maps = phase_maps(ref, pc.n_samples);
  {
    double worst = 0.0;
    double t_end = ref.t_at_max > ref.t_at_min ? ref.t_at_max : ref.t_at_max + ref.period;
    for (int i = 0; i <= 400; ++i) {
      const double t = ref.t_at_min + (t_end - ref.t_at_min) * i / 400.0;
      const double v = ref.vel(t);
      worst = std::max(worst, std::abs(maps.rho_d(ref.pos(t)) - v * v));
      worst = std::max(worst, std::abs(maps.rho_dd(ref.pos(t)) - ref.acc(t)));
    }
    check("phase maps consistent on the forward half", worst < 1e-8,
          "max deviation " + format_sig(worst));
  }

  bool sweep_ok = true, branch_ok = true, jac_ok = true, roundtrip_ok = true;
  double worst_closure = 0.0, worst_jac = 0.0, worst_rt = 0.0;
  JointConfig warm{};
  JointConfig q_first{};
  try {
    warm = branch_guess(model, {samples.front().pos, ref.height});
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Vec2 chi{samples[i].pos, ref.height};
      warm = solve_configuration(model, chi, warm);
      if (i == 0) q_first = warm;
      worst_closure = std::max(worst_closure, loop_residual(model, warm).norm());
      worst_rt = std::max(worst_rt, (direct_kinematics(model, warm) - chi).norm());
      for (int k = 1; k < 4; ++k)
        branch_ok = branch_ok && warm[k] > -std::numbers::pi && warm[k] < 0.0;
      const Mat42 jac = coordinate_jacobian(model, warm);
      worst_jac = std::max(
          worst_jac, (end_effector_jacobian(model, warm) * jac - Mat2::Identity()).norm());
      worst_jac = std::max(worst_jac, (loop_jacobian(model, warm) * jac).norm());
    }
    // periodicity of the configuration path
    const JointConfig q_back =
        solve_configuration(model, {samples.front().pos, ref.height}, warm);
    sweep_ok = (q_back - q_first).norm() < 1e-8;
  } catch (const std::exception& ex) {
    sweep_ok = jac_ok = roundtrip_ok = false;
    check("reachability sweep", false, ex.what());
  }
  check("loop closure along the reference", worst_closure < 1e-10,
        "max residual " + format_sig(worst_closure));
  check("kinematic round trip", roundtrip_ok && worst_rt < 1e-9,
        "max |h(q) - chi| " + format_sig(worst_rt));
  check("branch angles q2,q3,q4 in (-pi, 0)", branch_ok, "");
  check("jacobian identities", jac_ok && worst_jac < 1e-12, "max " + format_sig(worst_jac));
  check("configuration path periodic", sweep_ok, "");

  // coefficient sweep at the mass box corners
  bool alpha_ok = true, gy_ok = true, zeta_ok = true, spd_ok = true;
  const auto box = mass_param_box(model, pc.mass_bounds);
  std::vector<MassParams> corners;
  for (int mask = 0; mask < 16; ++mask)
    corners.push_back({box[0][mask & 1], box[1][(mask >> 1) & 1], box[2][(mask >> 2) & 1],
                       box[3][(mask >> 3) & 1]});
  try {
    warm = branch_guess(model, {samples.front().pos, ref.height});
    for (std::size_t i = 0; i < samples.size(); i += 25) {
      const auto st = make_station(model, samples[i].pos, ref.height, warm, pc.fd_scale);
      warm = st.q;
      zeta_ok = zeta_ok && std::abs(st.zeta_s) > 1e-9;
      for (const auto& pm : corners) {
        const auto e = eval_station(st, pm);
        spd_ok = spd_ok && e.M11 > 0 && e.M11 * e.M22 - e.M12 * e.M12 > 0;
      }
      const auto e0 = eval_station(st, MassParams{});
      alpha_ok = alpha_ok && std::abs(station_alpha(st, e0)) > 1e-12;
      const double den = e0.M11 * e0.M22 - e0.M12 * e0.M12;
      gy_ok = gy_ok && std::abs(station_alpha(st, e0) / den) > 1e-9;
    }
  } catch (const std::exception& ex) {
    alpha_ok = gy_ok = zeta_ok = spd_ok = false;
    check("coefficient sweep", false, ex.what());
  }
  check("alpha nonzero along the reference (no added mass)", alpha_ok, "");
  check("height-channel gain g_y nonzero", gy_ok, "");
  check("zeta_s nonzero", zeta_ok, "");
  check("inertia positive definite at the mass box corners", spd_ok, "");

  // gamma split identity for two springs at a probe point
  {
    const double x_probe = 0.5 * (ref.x_min + ref.x_max);
    SpringParams sp;
    sp.k0 = 1.7;
    sp.theta0 = 1.0;
    sp.pairs.push_back({2.0, 1.1, -0.5, 0.9});
    double worst = 0.0;
    for (const Spring& s : {Spring::zero(), Spring::from_params(sp)}) {
      const auto c = abc(model, MassParams{0.03, 0.02, 0.01, -0.02}, s, x_probe, ref.height,
                         pc.fd_scale);
      worst = std::max(worst,
                       std::abs(c.gamma - (c.zeta_s * s.torque(c.theta) + c.zeta_u)));
    }
    check("gamma split identity", worst < 1e-10, "max " + format_sig(worst));
  }
  return all_ok;
}

struct FitSpringOutput {
  SpringFitResult fit;
  std::filesystem::path json_path;
};

// `fit-spring`: step 2 alone, from a saved (theta, torque) table.
inline FitSpringOutput fit_spring_command(const std::filesystem::path& table_path,
                                          int n_pairs, double k_max, const GAConfig& ga,
                                          const std::filesystem::path& out_dir) {
  const CsvTable csv = read_csv(table_path);
  if (csv.columns.size() != 2)
    throw std::runtime_error(table_path.string() + ": expected two columns (theta, torque)");
  std::vector<std::array<double, 2>> table;
  table.reserve(csv.rows.size());
  for (const auto& r : csv.rows) table.push_back({r[0], r[1]});

  FitSpringOutput out;
  out.fit = optimize_spring(table, n_pairs, k_max, ga);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  nlohmann::json j;
  j["n"] = n_pairs;
  j["k_max"] = report_num(k_max);
  j["seed"] = ga.seed;
  nlohmann::json ps = nlohmann::json::array();
  for (const double v : out.fit.best.flatten()) ps.push_back(report_num(v));
  j["p_s"] = ps;
  j["mean_square_error"] = report_num(out.fit.mean_square_error);
  out.json_path = out_dir / ("spring_fit_n" + std::to_string(n_pairs) + ".json");
  std::ofstream f(out.json_path);
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("cannot write " + out.json_path.string());
  detail::write_fit_residuals_csv(
      out_dir / ("spring_fit_n" + std::to_string(n_pairs) + "_residuals.csv"), table,
      out.fit.best);
  return out;
}

// `simulate`: re-run the validation simulations of a saved design and emit
// the metrics; deterministic, so the numbers must reproduce the report's.
inline nlohmann::json simulate_command(const std::filesystem::path& report_path,
                                       const std::filesystem::path& out_dir) {
  std::ifstream in(report_path);
  if (!in) throw std::runtime_error("cannot open report " + report_path.string());
  nlohmann::json j;
  in >> j;

  const ConfigFile cfg_file =
      ConfigFile::parse(j.at("config_echo").get<std::string>(), "report-echo");
  PipelineConfig pc = PipelineConfig::from_config(cfg_file);
  const ReferenceTrajectory ref = pc.build_reference();

  const auto pmv = j.at("mass_optimization").at("p_m").get<std::vector<double>>();
  const MassParams pm = MassParams::from_flat(pmv);

  const auto sigma_csv = report_path.parent_path() / "sigma_star.csv";
  const CsvTable table = read_csv(sigma_csv);
  std::vector<std::array<double, 2>> sigma;
  for (const auto& r : table.rows) sigma.push_back({r[0], r[1]});

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);

  nlohmann::json out;
  auto metrics_json = [](const ValidationMetrics& vm) {
    nlohmann::json v;
    v["max_position_error"] = report_num(vm.max_position_error);
    v["position_error_fraction"] = report_num(vm.position_error_fraction);
    v["max_velocity_error"] = report_num(vm.max_velocity_error);
    v["orbital_deviation_fraction"] = report_num(vm.orbital_deviation_fraction);
    if (vm.detected_period) v["detected_period"] = report_num(*vm.detected_period);
    v["max_height_error"] = report_num(vm.max_height_error);
    v["max_height_accel"] = report_num(vm.max_height_accel);
    v["u_rms"] = report_num(vm.u_rms);
    v["energy_residual"] = report_num(vm.energy_residual);
    return v;
  };
  out["validation_sigma_star"] =
      metrics_json(validate_design(pc.mechanism, pm, make_sigma_spring(sigma), ref, pc));
  out["spring_fits"] = nlohmann::json::array();
  for (const auto& jf : j.at("spring_fits")) {
    const auto psv = jf.at("p_s").get<std::vector<double>>();
    const Spring s = Spring::from_params(SpringParams::from_flat(psv));
    nlohmann::json rf;
    rf["n"] = jf.at("n");
    rf["validation"] = metrics_json(validate_design(pc.mechanism, pm, s, ref, pc));
    out["spring_fits"].push_back(rf);
  }
  std::ofstream f(out_dir / "simulate_metrics.json");
  f << out.dump(2) << "\n";
  if (!f) throw std::runtime_error("cannot write simulate_metrics.json");
  return out;
}

}  // namespace zdshape
