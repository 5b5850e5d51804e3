// zdshape: zero-dynamics shaping toolkit for the spring-loaded four-link
// chain. Subcommands: run (full pipeline), simulate (re-run a saved design),
// fit-spring (piecewise-linear fit from a sigma table), check (invariant
// suite over a configuration).

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "zdshape/commands.hpp"
#include "zdshape/pipeline.hpp"

namespace {

struct CommonOpts {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--seed", opts.seed, "override the GA seed");
  cmd->add_option("--workers", opts.workers, "fitness worker count (0 = all cores)");
  cmd->add_option("--out", opts.out_dir, "override the output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-dynamics shaping toolkit"};
  app.require_subcommand(1);

  std::string config_path, report_path, table_path, check_path;
  int fit_n = 1;
  double fit_k_max = 10.0;
  CommonOpts run_opts, sim_opts, fit_opts;

  auto* run = app.add_subcommand("run", "run the full design pipeline");
  run->add_option("config", config_path, "pipeline configuration file")->required();
  add_common(run, run_opts);

  auto* sim = app.add_subcommand("simulate", "re-run validation sims from a run report");
  sim->add_option("--report", report_path, "path to report.json")->required();
  add_common(sim, sim_opts);

  auto* fit = app.add_subcommand("fit-spring", "fit a piecewise-linear spring to a table");
  fit->add_option("--table", table_path, "sigma CSV (theta, torque)")->required();
  fit->add_option("--n", fit_n, "number of sub-spring pairs")->required();
  fit->add_option("--k-max", fit_k_max, "slope bound for every spring element");
  add_common(fit, fit_opts);

  auto* check = app.add_subcommand("check", "run the invariant suite over a configuration");
  check->add_option("config", check_path, "pipeline configuration file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const zdshape::ConfigFile cfg = zdshape::ConfigFile::load(config_path);
      zdshape::PipelineOverrides ov;
      ov.seed = run_opts.seed;
      ov.workers = run_opts.workers;
      if (run_opts.out_dir) ov.output_dir = *run_opts.out_dir;
      const auto report = zdshape::run_pipeline(cfg, ov);
      std::cout << "rms " << zdshape::format_sig(report.mass.rms_optimized) << " Nm vs baseline "
                << zdshape::format_sig(report.mass.rms_baseline) << " Nm ("
                << zdshape::format_sig(
                       100.0 * (1.0 - report.mass.rms_optimized / report.mass.rms_baseline))
                << "% reduction)\n";
      if (report.expected_rms && report.expected_baseline_rms)
        std::cout << "published values for comparison: "
                  << zdshape::format_sig(*report.expected_rms) << " vs "
                  << zdshape::format_sig(*report.expected_baseline_rms) << " Nm\n";
      std::cout << "report written to "
                << (run_opts.out_dir ? *run_opts.out_dir
                                     : zdshape::PipelineConfig::from_config(cfg)
                                           .output_dir.string())
                << "/report.json\n";
      return 0;
    }
    if (sim->parsed()) {
      const std::filesystem::path rp = report_path;
      const std::filesystem::path out =
          sim_opts.out_dir ? std::filesystem::path(*sim_opts.out_dir)
                           : rp.parent_path() / "simulate";
      const auto metrics = zdshape::simulate_command(rp, out);
      std::cout << metrics.dump(2) << "\n";
      return 0;
    }
    if (fit->parsed()) {
      zdshape::GAConfig ga;
      ga.generations = 400;
      if (fit_opts.seed) ga.seed = *fit_opts.seed;
      if (fit_opts.workers) ga.workers = *fit_opts.workers;
      const std::filesystem::path out = fit_opts.out_dir ? *fit_opts.out_dir : "out/fit";
      const auto result =
          zdshape::fit_spring_command(table_path, fit_n, fit_k_max, ga, out);
      std::cout << "mean-square mismatch "
                << zdshape::format_sig(result.fit.mean_square_error) << ", parameters in "
                << result.json_path.string() << "\n";
      return 0;
    }
    if (check->parsed()) {
      const zdshape::ConfigFile cfg = zdshape::ConfigFile::load(check_path);
      const bool ok = zdshape::run_checks(cfg, std::cout);
      return ok ? 0 : 1;
    }
  } catch (const zdshape::PipelineError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return static_cast<int>(ex.stage);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}
