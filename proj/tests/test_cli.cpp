#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "zdshape/commands.hpp"
#include "zdshape/pipeline.hpp"

using namespace zdshape;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("zdshape_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// small but complete pipeline configuration for fast end-to-end runs
std::string mini_config(const fs::path& out_dir) {
  return R"([mechanism]
l1 = 0.080
l2 = 0.235
l3 = 0.052
l4 = 0.135
m1 = 0.071
m2 = 0.195
m3 = 0.049
m4 = 0.115
j1 = 0.747e-4
j2 = 10.413e-4
j3 = 0.345e-4
j4 = 2.430e-4
base_x = -0.19
base_y = 0.15
anchor_x = 0.01
anchor_y = 0.04

[mass_bounds]
mass_max = 0.1
offset_max = 0.05

[spring]
k_max = 10.0
n_values = 1

[reference]
family = cosine
period = 0.5
height = 0.15
samples = 250
c0 = 0.010
harmonics = 0.03 0.00375

[ga]
population = 40
generations = 40
restarts = 1
seed = 7
fit_generations = 60

[simulation]
dt_divisor = 2000

[output]
dir = )" + out_dir.string() + "\n";
}

}  // namespace

TEST_CASE("config parser reads sections, comments, and lists") {
  const auto cfg = ConfigFile::parse(
      "# comment\n[alpha]\nx = 1.5  # trailing\nname = hello\n[beta]\nlist = 1 2 3\n");
  CHECK(cfg.number("alpha", "x") == 1.5);
  CHECK(cfg.text("alpha", "name") == "hello");
  CHECK(cfg.numbers("beta", "list") == std::vector<double>{1, 2, 3});
  CHECK(cfg.number_or("beta", "absent", 9.0) == 9.0);
  CHECK_THROWS_AS(cfg.number("alpha", "missing"), ConfigError);
  CHECK_THROWS_WITH(cfg.number("alpha", "name"),
                    Catch::Matchers::ContainsSubstring("alpha.name"));
  CHECK_THROWS_AS(ConfigFile::parse("no equals sign here\n"), ConfigError);
}

TEST_CASE("missing mechanism field aborts the config stage with its name") {
  const fs::path out = temp_dir("badcfg");
  std::string text = mini_config(out);
  text.erase(text.find("l2 = 0.235\n"), 11);
  const auto cfg = ConfigFile::parse(text, "broken.cfg");
  try {
    run_pipeline(cfg);
    FAIL("expected a config-stage failure");
  } catch (const PipelineError& ex) {
    CHECK(ex.stage == PipelineStage::config);
    CHECK(std::string(ex.what()).find("mechanism.l2") != std::string::npos);
  }
}

TEST_CASE("pipeline runs end to end and the report reproduces") {
  const fs::path out = temp_dir("pipeline");
  const auto cfg = ConfigFile::parse(mini_config(out), "mini.cfg");
  const auto report = run_pipeline(cfg);
  CHECK(report.mass.rms_optimized <= report.mass.rms_baseline);
  CHECK(report.mass.center.omega_s > 0.0);
  CHECK(fs::exists(out / "report.json"));
  CHECK(fs::exists(out / "sigma_star.csv"));
  CHECK(fs::exists(out / "zerodyn_sigma_star.csv"));
  CHECK(fs::exists(out / "closedloop_fit_n1.csv"));

  // every manifest entry exists and carries a header row
  for (const auto& [file, columns] : report.manifest) {
    CHECK(fs::exists(out / file));
    std::ifstream in(out / file);
    std::string header;
    std::getline(in, header);
    CHECK(!header.empty());
    CHECK(header.find(',') != std::string::npos);
  }

  // identical config + seed reproduce byte-identical numerics
  const fs::path out2 = temp_dir("pipeline2");
  auto cfg2 = ConfigFile::parse(mini_config(out), "mini.cfg");
  PipelineOverrides ov;
  ov.output_dir = out2;
  const auto report2 = run_pipeline(cfg2, ov);
  CHECK(report.to_json(false).dump(2) == report2.to_json(false).dump(2));
  CHECK(slurp(out / "sigma_star.csv") == slurp(out2 / "sigma_star.csv"));

  // simulate re-derives the report metrics from the stored design
  const auto metrics = simulate_command(out / "report.json", out / "resim");
  const auto& stored = report.to_json(false).at("validation_sigma_star");
  const auto& redone = metrics.at("validation_sigma_star");
  CHECK(std::abs(stored.at("u_rms").get<double>() - redone.at("u_rms").get<double>()) <
        1e-9);
  CHECK(std::abs(stored.at("max_position_error").get<double>() -
                 redone.at("max_position_error").get<double>()) < 1e-9);
}

TEST_CASE("check suite passes on the bundled configurations") {
  const char* config_dir = std::getenv("ZDSHAPE_CONFIG_DIR");
  REQUIRE(config_dir != nullptr);
  for (const char* name : {"dual_speed_cosine.cfg", "trapezoid_scurve.cfg"}) {
    const auto cfg = ConfigFile::load(fs::path(config_dir) / name);
    std::ostringstream log;
    const bool ok = run_checks(cfg, log);
    INFO(log.str());
    CHECK(ok);
  }
}

TEST_CASE("fit-spring command is deterministic for a fixed seed") {
  const fs::path dir = temp_dir("fitspring");
  // build a sigma table from a known characteristic
  SpringParams truth;
  truth.k0 = 1.2;
  truth.theta0 = 0.9;
  truth.pairs.push_back({2.0, 1.15, -0.8, 0.8});
  {
    const std::string cols[] = {"theta", "torque"};
    CsvWriter csv(dir / "sigma.csv", cols);
    for (int i = 0; i < 400; ++i) {
      const double theta = 0.7 + 0.6 * i / 399.0;
      const double row[] = {theta, eval_spring(truth, theta)};
      csv.row(row);
    }
  }
  GAConfig ga;
  ga.population = 60;
  ga.generations = 80;
  ga.restarts = 2;
  ga.seed = 7;
  const auto a = fit_spring_command(dir / "sigma.csv", 2, 10.0, ga, dir / "a");
  const auto b = fit_spring_command(dir / "sigma.csv", 2, 10.0, ga, dir / "b");
  CHECK(a.fit.best.flatten() == b.fit.best.flatten());
  CHECK(a.fit.mean_square_error == b.fit.mean_square_error);
  CHECK(slurp(a.json_path) == slurp(b.json_path));
}

TEST_CASE("cli binary runs the check subcommand") {
  const char* bin = std::getenv("ZDSHAPE_BIN");
  const char* config_dir = std::getenv("ZDSHAPE_CONFIG_DIR");
  REQUIRE(bin != nullptr);
  REQUIRE(config_dir != nullptr);
  const std::string cmd = std::string("\"") + bin + "\" check \"" + config_dir +
                          "/dual_speed_cosine.cfg\" > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
}
