#pragma once

// End-to-end design pipeline: reference construction, mass-distribution
// optimization, spring fitting for each requested pair count, validation
// simulations, and the JSON run report with its file manifest. Stages abort
// with a stage-tagged error that the CLI maps to its exit code.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zdshape/config.hpp"
#include "zdshape/csv.hpp"
#include "zdshape/log.hpp"
#include "zdshape/optimize.hpp"
#include "zdshape/sim.hpp"

namespace zdshape {

enum class PipelineStage : int {
  config = 2,
  reference = 3,
  mechanism = 4,
  mass_optimization = 5,
  spring_fit = 6,
  simulation = 7,
  report = 8,
};

inline const char* stage_name(PipelineStage s) {
  switch (s) {
    case PipelineStage::config: return "config";
    case PipelineStage::reference: return "reference";
    case PipelineStage::mechanism: return "mechanism";
    case PipelineStage::mass_optimization: return "mass-optimization";
    case PipelineStage::spring_fit: return "spring-fit";
    case PipelineStage::simulation: return "simulation";
    case PipelineStage::report: return "report";
  }
  return "unknown";
}

struct PipelineError : std::runtime_error {
  PipelineError(PipelineStage s, const std::string& msg)
      : std::runtime_error(std::string(stage_name(s)) + " stage: " + msg), stage(s) {}
  PipelineStage stage;
};

struct PipelineConfig {
  MechanismModel mechanism;
  MassBounds mass_bounds;

  double spring_k_max = 10.0;
  std::vector<int> spring_pair_counts{1};

  std::string ref_family = "cosine";
  double period = 0.5;
  double height = 0.15;
  int n_samples = 1000;
  double cosine_c0 = 0.0;
  std::vector<double> cosine_harmonics;
  double scurve_x_min = 0.0, scurve_x_max = 0.0;
  double scurve_cruise_fraction = 0.35, scurve_smoothing = 0.5;

  GAConfig ga;
  int fit_generations = 400;  // spring-fit GA budget (dimension grows with n)

  double sim_dt_divisor = 1e4;
  double sim_periods = 1.0;
  double sim_kp = 0.0, sim_kd = 0.0;
  double escape_margin = 0.3;  // allowed excursion past the window, in strokes

  double fd_scale = 1e-6;
  std::filesystem::path output_dir = "out";

  // published comparison values for this configuration (not binding)
  std::optional<double> expected_rms, expected_baseline_rms;

  static PipelineConfig from_config(const ConfigFile& cfg) {
    PipelineConfig pc;
    auto& m = pc.mechanism;
    m.link_lengths = {cfg.number("mechanism", "l1"), cfg.number("mechanism", "l2"),
                      cfg.number("mechanism", "l3"), cfg.number("mechanism", "l4")};
    m.link_masses = {cfg.number("mechanism", "m1"), cfg.number("mechanism", "m2"),
                     cfg.number("mechanism", "m3"), cfg.number("mechanism", "m4")};
    m.link_inertias = {cfg.number("mechanism", "j1"), cfg.number("mechanism", "j2"),
                       cfg.number("mechanism", "j3"), cfg.number("mechanism", "j4")};
    m.base_J1 = {cfg.number("mechanism", "base_x"), cfg.number("mechanism", "base_y")};
    m.anchor_J5 = {cfg.number("mechanism", "anchor_x"), cfg.number("mechanism", "anchor_y")};
    m.gravity = cfg.number_or("mechanism", "gravity", 9.81);
    m.validate();

    pc.mass_bounds.mass_max = cfg.number("mass_bounds", "mass_max");
    pc.mass_bounds.offset_max = cfg.number("mass_bounds", "offset_max");

    pc.spring_k_max = cfg.number("spring", "k_max");
    pc.spring_pair_counts.clear();
    for (const double n : cfg.numbers("spring", "n_values")) {
      if (n < 0 || n != static_cast<int>(n))
        throw ConfigError("spring.n_values must be non-negative integers");
      pc.spring_pair_counts.push_back(static_cast<int>(n));
    }

    pc.ref_family = cfg.text("reference", "family");
    pc.period = cfg.number("reference", "period");
    pc.height = cfg.number("reference", "height");
    pc.n_samples = static_cast<int>(cfg.integer("reference", "samples"));
    if (pc.ref_family == "cosine") {
      pc.cosine_c0 = cfg.number("reference", "c0");
      pc.cosine_harmonics = cfg.numbers("reference", "harmonics");
    } else if (pc.ref_family == "scurve") {
      pc.scurve_x_min = cfg.number("reference", "x_min");
      pc.scurve_x_max = cfg.number("reference", "x_max");
      pc.scurve_cruise_fraction = cfg.number("reference", "cruise_fraction");
      pc.scurve_smoothing = cfg.number_or("reference", "smoothing", 0.5);
    } else {
      throw ConfigError("reference.family must be 'cosine' or 'scurve', got '" +
                        pc.ref_family + "'");
    }

    pc.ga.population = static_cast<int>(cfg.integer_or("ga", "population", 200));
    pc.ga.generations = static_cast<int>(cfg.integer_or("ga", "generations", 300));
    pc.ga.tournament = static_cast<int>(cfg.integer_or("ga", "tournament", 4));
    pc.ga.crossover_rate = cfg.number_or("ga", "crossover_rate", 0.9);
    pc.ga.blend_alpha = cfg.number_or("ga", "blend_alpha", 0.5);
    pc.ga.mutation_rate = cfg.number_or("ga", "mutation_rate", 0.1);
    pc.ga.mutation_scale = cfg.number_or("ga", "mutation_scale", 0.05);
    pc.ga.mutation_shrink = cfg.number_or("ga", "mutation_shrink", 1.0);
    pc.ga.elites = static_cast<int>(cfg.integer_or("ga", "elites", 2));
    pc.ga.restarts = static_cast<int>(cfg.integer_or("ga", "restarts", 4));
    pc.ga.seed = static_cast<std::uint64_t>(cfg.integer_or("ga", "seed", 1));
    pc.ga.validate();
    pc.fit_generations = static_cast<int>(cfg.integer_or("ga", "fit_generations", 400));

    pc.sim_dt_divisor = cfg.number_or("simulation", "dt_divisor", 1e4);
    pc.sim_periods = cfg.number_or("simulation", "periods", 1.0);
    pc.sim_kp = cfg.number_or("simulation", "kp", 0.0);
    pc.sim_kd = cfg.number_or("simulation", "kd", 0.0);
    pc.escape_margin = cfg.number_or("simulation", "escape_margin", 0.3);
    pc.fd_scale = cfg.number_or("simulation", "fd_scale", 1e-6);

    pc.output_dir = cfg.text_or("output", "dir", "out");
    if (cfg.has("expectations", "rms_optimized"))
      pc.expected_rms = cfg.number("expectations", "rms_optimized");
    if (cfg.has("expectations", "rms_baseline"))
      pc.expected_baseline_rms = cfg.number("expectations", "rms_baseline");
    return pc;
  }

  ReferenceTrajectory build_reference() const {
    if (ref_family == "cosine")
      return make_cosine_reference(cosine_c0, cosine_harmonics, period, height);
    return make_scurve_reference(scurve_x_min, scurve_x_max, scurve_cruise_fraction, period,
                                 height, scurve_smoothing);
  }
};

// truncate to 12 significant digits so report numerics are stable text
inline double report_num(double v) {
  return std::strtod(format_sig(v).c_str(), nullptr);
}

struct ValidationMetrics {
  // zero dynamics vs reference, time-aligned over one period
  double max_position_error = 0.0;         // m
  double position_error_fraction = 0.0;    // of stroke
  double max_velocity_error = 0.0;         // m/s
  double orbital_deviation_fraction = 0.0; // phase-free nearest-point distance
  std::optional<double> detected_period;
  bool zero_dyn_fault = false;
  std::string zero_dyn_fault_what;
  // closed loop under the linearizing torque
  double max_height_error = 0.0;  // m
  double max_height_accel = 0.0;  // m/s^2, |ydd| measured by differencing ydot
  double u_rms = 0.0;             // Nm over the logged period
  double energy_residual = 0.0;   // max |E - E0 - W|
  bool closed_loop_fault = false;
  std::string closed_loop_fault_what;
};

namespace detail {

inline void zero_dyn_metrics(const ZeroDynTrajectory& zd, const ReferenceTrajectory& ref,
                             ValidationMetrics& vm) {
  double worst = 0.0, vworst = 0.0;
  for (std::size_t k = 0; k < zd.t.size(); ++k) {
    worst = std::max(worst, std::abs(zd.x[k] - ref.pos(zd.t[k])));
    vworst = std::max(vworst, std::abs(zd.xdot[k] - ref.vel(zd.t[k])));
  }
  vm.max_position_error = worst;
  vm.position_error_fraction = worst / ref.stroke();
  vm.max_velocity_error = vworst;
  vm.detected_period = zd.period;
  // phase-free orbital deviation against a dense reference polyline
  const int m = 2000;
  std::vector<double> rx(m), rv(m);
  double vmax = 1e-12;
  for (int i = 0; i < m; ++i) {
    const double t = ref.period * i / m;
    rx[i] = ref.pos(t);
    rv[i] = ref.vel(t);
    vmax = std::max(vmax, std::abs(rv[i]));
  }
  double orbital = 0.0;
  const std::size_t stride = std::max<std::size_t>(1, zd.t.size() / 2000);
  for (std::size_t k = 0; k < zd.t.size(); k += stride) {
    double best = 1e30;
    for (int i = 0; i < m; ++i) {
      const double dx = (zd.x[k] - rx[i]) / ref.stroke();
      const double dv = (zd.xdot[k] - rv[i]) / vmax;
      best = std::min(best, dx * dx + dv * dv);
    }
    orbital = std::max(orbital, std::sqrt(best));
  }
  vm.orbital_deviation_fraction = orbital;
}

}  // namespace detail

// Zero-dynamics and closed-loop validation of one (mass, spring) design.
inline ValidationMetrics validate_design(const MechanismModel& model, const MassParams& pm,
                                         const Spring& spring,
                                         const ReferenceTrajectory& ref,
                                         const PipelineConfig& pc,
                                         ClosedLoopTrajectory* cl_out = nullptr,
                                         ZeroDynTrajectory* zd_out = nullptr) {
  ValidationMetrics vm;
  IntegrationOptions io;
  io.dt = ref.period / pc.sim_dt_divisor;
  io.horizon = ref.period * pc.sim_periods;
  io.x_lo = ref.x_min - pc.escape_margin * ref.stroke();
  io.x_hi = ref.x_max + pc.escape_margin * ref.stroke();
  try {
    auto zd = simulate_zero_dynamics(model, pm, spring, ref.pos(0.0), ref.vel(0.0),
                                     ref.height, io, pc.fd_scale);
    detail::zero_dyn_metrics(zd, ref, vm);
    if (zd_out) *zd_out = std::move(zd);
  } catch (const std::exception& ex) {
    vm.zero_dyn_fault = true;
    vm.zero_dyn_fault_what = ex.what();
    vm.position_error_fraction = std::numeric_limits<double>::infinity();
  }

  SimOptions so;
  so.dt = io.dt;
  so.horizon = io.horizon;
  so.height = ref.height;
  so.kp = pc.sim_kp;
  so.kd = pc.sim_kd;
  so.x_lo = io.x_lo;
  so.x_hi = io.x_hi;
  so.fd_scale = pc.fd_scale;
  auto cl = simulate_closed_loop(model, pm, spring, {ref.pos(0.0), ref.height},
                                 {ref.vel(0.0), 0.0}, so);
  if (cl.fault) {
    vm.closed_loop_fault = true;
    vm.closed_loop_fault_what = cl.fault->what;
  }
  for (std::size_t k = 0; k < cl.size(); ++k)
    vm.max_height_error = std::max(vm.max_height_error, std::abs(cl.y[k] - ref.height));
  for (std::size_t k = 1; k < cl.size(); ++k)
    vm.max_height_accel =
        std::max(vm.max_height_accel,
                 std::abs(cl.ydot[k] - cl.ydot[k - 1]) / (cl.t[k] - cl.t[k - 1]));
  if (cl.size() > 1) {
    const std::vector<double> us(cl.u.begin(), cl.u.end() - 1);
    vm.u_rms = rms(us);
    vm.energy_residual = energy_audit(cl, model, pm, spring);
  }
  if (cl_out) *cl_out = std::move(cl);
  return vm;
}

struct SpringFitOutcome {
  int n_pairs = 0;
  SpringFitResult fit;
  ValidationMetrics metrics;
};

struct RunReport {
  std::string config_path;
  std::string config_hash;
  std::string config_text;
  std::uint64_t seed = 0;
  unsigned workers = 0;

  std::string ref_family;
  double period = 0, height = 0, x_min = 0, x_max = 0;
  int n_samples = 0;
  double symmetry_violation = 0;

  MassOptResult mass;
  std::optional<double> expected_rms, expected_baseline_rms;
  ValidationMetrics sigma_metrics;  // design with the tabulated ideal spring
  std::vector<SpringFitOutcome> fits;

  std::vector<std::pair<std::string, std::string>> manifest;  // file, description
  double elapsed_seconds = 0;

  nlohmann::json to_json(bool include_timing = true) const {
    nlohmann::json j;
    j["config"] = {{"path", config_path}, {"hash", config_hash}};
    j["config_echo"] = config_text;
    j["seed"] = seed;
    j["reference"] = {{"family", ref_family},
                      {"period", report_num(period)},
                      {"height", report_num(height)},
                      {"samples", n_samples},
                      {"x_min", report_num(x_min)},
                      {"x_max", report_num(x_max)},
                      {"stroke", report_num(x_max - x_min)},
                      {"symmetry_violation", report_num(symmetry_violation)}};
    const auto pmv = mass.best.flatten();
    nlohmann::json jm;
    jm["p_m"] = {report_num(pmv[0]), report_num(pmv[1]), report_num(pmv[2]),
                 report_num(pmv[3])};
    jm["rms"] = report_num(mass.rms_optimized);
    jm["rms_baseline"] = report_num(mass.rms_baseline);
    jm["reduction_percent"] =
        report_num(100.0 * (1.0 - mass.rms_optimized / mass.rms_baseline));
    jm["center"] = {{"r_x0", report_num(mass.center.r_x0)},
                    {"omega_s", report_num(mass.center.omega_s)},
                    {"bracket", {report_num(mass.center.x1), report_num(mass.center.x2)}}};
    if (expected_rms) jm["published_rms"] = report_num(*expected_rms);
    if (expected_baseline_rms)
      jm["published_rms_baseline"] = report_num(*expected_baseline_rms);
    j["mass_optimization"] = jm;

    auto metrics_json = [](const ValidationMetrics& vm) {
      nlohmann::json v;
      v["max_position_error"] = report_num(vm.max_position_error);
      v["position_error_fraction"] = report_num(vm.position_error_fraction);
      v["max_velocity_error"] = report_num(vm.max_velocity_error);
      v["orbital_deviation_fraction"] = report_num(vm.orbital_deviation_fraction);
      if (vm.detected_period) v["detected_period"] = report_num(*vm.detected_period);
      if (vm.zero_dyn_fault) v["zero_dyn_fault"] = vm.zero_dyn_fault_what;
      v["max_height_error"] = report_num(vm.max_height_error);
      v["max_height_accel"] = report_num(vm.max_height_accel);
      v["u_rms"] = report_num(vm.u_rms);
      v["energy_residual"] = report_num(vm.energy_residual);
      if (vm.closed_loop_fault) v["closed_loop_fault"] = vm.closed_loop_fault_what;
      return v;
    };
    j["validation_sigma_star"] = metrics_json(sigma_metrics);

    j["spring_fits"] = nlohmann::json::array();
    for (const auto& f : fits) {
      nlohmann::json jf;
      jf["n"] = f.n_pairs;
      nlohmann::json ps = nlohmann::json::array();
      for (const double v : f.fit.best.flatten()) ps.push_back(report_num(v));
      jf["p_s"] = ps;
      jf["mean_square_error"] = report_num(f.fit.mean_square_error);
      jf["validation"] = metrics_json(f.metrics);
      j["spring_fits"].push_back(jf);
    }

    j["manifest"] = nlohmann::json::array();
    for (const auto& [file, desc] : manifest)
      j["manifest"].push_back({{"file", file}, {"columns", desc}});
    if (include_timing) j["timing"] = {{"elapsed_seconds", elapsed_seconds}};
    return j;
  }
};

struct PipelineOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::filesystem::path> output_dir;
};

namespace detail {

inline void write_reference_csv(const std::filesystem::path& path,
                                const std::vector<RefSample>& samples) {
  const std::string cols[] = {"t", "r_x", "r_x_dot", "r_x_ddot"};
  CsvWriter csv(path, cols);
  for (const auto& s : samples) {
    const double row[] = {s.t, s.pos, s.vel, s.acc};
    csv.row(row);
  }
}

inline void write_sigma_csv(const std::filesystem::path& path,
                            std::vector<std::array<double, 2>> table) {
  std::sort(table.begin(), table.end(),
            [](const auto& a, const auto& b) { return a[0] < b[0]; });
  const std::string cols[] = {"theta", "torque"};
  CsvWriter csv(path, cols);
  for (const auto& r : table) {
    const double row[] = {r[0], r[1]};
    csv.row(row);
  }
}

inline void write_telemetry_csv(const std::filesystem::path& path,
                                const std::vector<GATelemetryRow>& rows) {
  const std::string cols[] = {"restart", "generation", "best", "mean"};
  CsvWriter csv(path, cols);
  for (const auto& r : rows) {
    const double row[] = {static_cast<double>(r.restart), static_cast<double>(r.generation),
                          r.best, r.mean};
    csv.row(row);
  }
}

inline void write_zero_dyn_csv(const std::filesystem::path& path,
                               const ZeroDynTrajectory& zd) {
  const std::string cols[] = {"t", "x", "xdot"};
  CsvWriter csv(path, cols);
  for (std::size_t k = 0; k < zd.t.size(); ++k) {
    const double row[] = {zd.t[k], zd.x[k], zd.xdot[k]};
    csv.row(row);
  }
}

inline void write_closed_loop_csv(const std::filesystem::path& path,
                                  const ClosedLoopTrajectory& cl) {
  const std::string cols[] = {"t", "x", "xdot", "y", "ydot", "u", "E_kin", "E_pot"};
  CsvWriter csv(path, cols);
  for (std::size_t k = 0; k < cl.size(); ++k) {
    const double row[] = {cl.t[k],    cl.x[k], cl.xdot[k],  cl.y[k],
                          cl.ydot[k], cl.u[k], cl.e_kin[k], cl.e_pot[k]};
    csv.row(row);
  }
}

inline void write_fit_residuals_csv(const std::filesystem::path& path,
                                    const std::vector<std::array<double, 2>>& table,
                                    const SpringParams& params) {
  const std::string cols[] = {"theta", "sigma_star", "fit", "residual"};
  CsvWriter csv(path, cols);
  for (const auto& r : table) {
    const double fit = eval_spring(params, r[0]);
    const double row[] = {r[0], r[1], fit, fit - r[1]};
    csv.row(row);
  }
}

}  // namespace detail

inline RunReport run_pipeline(const ConfigFile& cfg_file,
                              const PipelineOverrides& overrides = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  RunReport report;

  PipelineConfig pc;
  try {
    pc = PipelineConfig::from_config(cfg_file);
  } catch (const std::exception& ex) {
    throw PipelineError(PipelineStage::config, ex.what());
  }
  if (overrides.seed) pc.ga.seed = *overrides.seed;
  if (overrides.workers) pc.ga.workers = *overrides.workers;
  if (overrides.output_dir) pc.output_dir = *overrides.output_dir;

  report.config_path = cfg_file.name();
  char hash_buf[32];
  std::snprintf(hash_buf, sizeof(hash_buf), "fnv1a-%016llx",
                static_cast<unsigned long long>(cfg_file.hash()));
  report.config_hash = hash_buf;
  report.config_text = cfg_file.raw_text();
  report.seed = pc.ga.seed;
  report.workers = resolve_workers(pc.ga.workers);
  report.expected_rms = pc.expected_rms;
  report.expected_baseline_rms = pc.expected_baseline_rms;

  std::error_code ec;
  std::filesystem::create_directories(pc.output_dir, ec);
  if (ec)
    throw PipelineError(PipelineStage::report,
                        "cannot create output directory " + pc.output_dir.string());

  // reference
  ReferenceTrajectory ref;
  std::vector<RefSample> samples;
  try {
    ref = pc.build_reference();
    const auto sym = check_symmetry(ref, 1e-9);
    if (!sym.ok)
      throw std::runtime_error("reference violates the time-reversal symmetry by " +
                               format_sig(sym.max_violation));
    report.symmetry_violation = sym.max_violation;
    samples = sample(ref, pc.n_samples);
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& ex) {
    throw PipelineError(PipelineStage::reference, ex.what());
  }
  report.ref_family = ref.family;
  report.period = ref.period;
  report.height = ref.height;
  report.x_min = ref.x_min;
  report.x_max = ref.x_max;
  report.n_samples = pc.n_samples;
  log_info("reference window [" + format_sig(ref.x_min) + ", " + format_sig(ref.x_max) + "]");

  // mechanism reachability sweep along the reference
  try {
    JointConfig warm = branch_guess(pc.mechanism, {samples.front().pos, ref.height});
    for (const auto& s : samples) {
      warm = solve_configuration(pc.mechanism, {s.pos, ref.height}, warm);
      if (loop_residual(pc.mechanism, warm).norm() > 1e-10)
        throw std::runtime_error("loop closure residual too large at x=" + format_sig(s.pos));
    }
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& ex) {
    throw PipelineError(PipelineStage::mechanism, ex.what());
  }

  // step 1: mass distribution
  try {
    report.mass = optimize_mass(pc.mechanism, ref, pc.n_samples, pc.mass_bounds, pc.ga,
                                pc.fd_scale);
  } catch (const std::exception& ex) {
    throw PipelineError(PipelineStage::mass_optimization, ex.what());
  }
  log_info("mass optimization: rms " + format_sig(report.mass.rms_optimized) + " vs baseline " +
           format_sig(report.mass.rms_baseline));

  detail::write_reference_csv(pc.output_dir / "reference_samples.csv", samples);
  report.manifest.emplace_back("reference_samples.csv", "t, r_x, r_x_dot, r_x_ddot");
  detail::write_sigma_csv(pc.output_dir / "sigma_star.csv", report.mass.sigma_star);
  report.manifest.emplace_back("sigma_star.csv", "theta, torque");
  detail::write_telemetry_csv(pc.output_dir / "ga_mass_telemetry.csv", report.mass.telemetry);
  report.manifest.emplace_back("ga_mass_telemetry.csv", "restart, generation, best, mean");

  // step 2: spring fits, warm-started by every previous fit
  GAConfig fit_cfg = pc.ga;
  fit_cfg.generations = pc.fit_generations;
  std::vector<SpringParams> warm_fits;
  std::vector<std::array<double, 2>> fit_table = report.mass.sigma_star;
  std::sort(fit_table.begin(), fit_table.end(),
            [](const auto& a, const auto& b) { return a[0] < b[0]; });
  for (const int n : pc.spring_pair_counts) {
    SpringFitOutcome outcome;
    outcome.n_pairs = n;
    try {
      outcome.fit = optimize_spring(fit_table, n, pc.spring_k_max, fit_cfg, warm_fits);
    } catch (const std::exception& ex) {
      throw PipelineError(PipelineStage::spring_fit,
                          "n=" + std::to_string(n) + ": " + ex.what());
    }
    warm_fits.push_back(outcome.fit.best);
    const std::string base = "spring_fit_n" + std::to_string(n);
    detail::write_fit_residuals_csv(pc.output_dir / (base + "_residuals.csv"), fit_table,
                                    outcome.fit.best);
    report.manifest.emplace_back(base + "_residuals.csv", "theta, sigma_star, fit, residual");
    detail::write_telemetry_csv(pc.output_dir / (base + "_telemetry.csv"),
                                outcome.fit.telemetry);
    report.manifest.emplace_back(base + "_telemetry.csv", "restart, generation, best, mean");
    report.fits.push_back(std::move(outcome));
  }

  // validation simulations
  try {
    const Spring sigma_spring = make_sigma_spring(report.mass.sigma_star);
    ClosedLoopTrajectory cl;
    ZeroDynTrajectory zd;
    report.sigma_metrics =
        validate_design(pc.mechanism, report.mass.best, sigma_spring, ref, pc, &cl, &zd);
    detail::write_zero_dyn_csv(pc.output_dir / "zerodyn_sigma_star.csv", zd);
    report.manifest.emplace_back("zerodyn_sigma_star.csv", "t, x, xdot");
    detail::write_closed_loop_csv(pc.output_dir / "closedloop_sigma_star.csv", cl);
    report.manifest.emplace_back("closedloop_sigma_star.csv",
                                 "t, x, xdot, y, ydot, u, E_kin, E_pot");
    for (auto& f : report.fits) {
      const Spring s = Spring::from_params(f.fit.best);
      ClosedLoopTrajectory fcl;
      ZeroDynTrajectory fzd;
      f.metrics = validate_design(pc.mechanism, report.mass.best, s, ref, pc, &fcl, &fzd);
      const std::string base = "n" + std::to_string(f.n_pairs);
      detail::write_zero_dyn_csv(pc.output_dir / ("zerodyn_fit_" + base + ".csv"), fzd);
      report.manifest.emplace_back("zerodyn_fit_" + base + ".csv", "t, x, xdot");
      detail::write_closed_loop_csv(pc.output_dir / ("closedloop_fit_" + base + ".csv"), fcl);
      report.manifest.emplace_back("closedloop_fit_" + base + ".csv",
                                   "t, x, xdot, y, ydot, u, E_kin, E_pot");
    }
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& ex) {
    throw PipelineError(PipelineStage::simulation, ex.what());
  }

  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  try {
    std::ofstream out(pc.output_dir / "report.json");
    out << report.to_json().dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write report.json");
  } catch (const std::exception& ex) {
    throw PipelineError(PipelineStage::report, ex.what());
  }
  return report;
}

}  // namespace zdshape
