#pragma once

// Seedable elitist genetic algorithm over box domains, and the two design
// problems built on it: mass-distribution RMS minimization (with the center
// inequality handled by an additive penalty) and piecewise-linear spring
// fitting. All randomness lives in the sequential generation loop; fitness
// evaluations are pure and may run on any number of workers without changing
// the result.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zdshape/parallel.hpp"
#include "zdshape/zerodyn.hpp"

namespace zdshape {

struct InfeasibleProblem : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GAConfig {
  int population = 200;
  int generations = 300;
  int tournament = 4;
  double crossover_rate = 0.9;
  double blend_alpha = 0.5;     // expansion of the parent interval in blend crossover
  double mutation_rate = 0.1;   // per-gene probability
  double mutation_scale = 0.05; // stddev as a fraction of the box width
  double mutation_shrink = 1.0; // linear decay of the scale over the run (0 = none)
  int elites = 2;
  int restarts = 4;
  std::uint64_t seed = 1;
  unsigned workers = 0;  // 0 = hardware concurrency

  void validate() const {
    if (population < 2) throw std::invalid_argument("ga.population must be >= 2");
    if (generations < 1) throw std::invalid_argument("ga.generations must be >= 1");
    if (tournament < 1) throw std::invalid_argument("ga.tournament must be >= 1");
    if (elites < 0 || elites > population)
      throw std::invalid_argument("ga.elites must be in [0, population]");
    if (restarts < 1) throw std::invalid_argument("ga.restarts must be >= 1");
    if (crossover_rate < 0 || crossover_rate > 1)
      throw std::invalid_argument("ga.crossover_rate must be in [0, 1]");
    if (mutation_rate < 0 || mutation_rate > 1)
      throw std::invalid_argument("ga.mutation_rate must be in [0, 1]");
    if (mutation_scale < 0) throw std::invalid_argument("ga.mutation_scale must be >= 0");
    if (mutation_shrink < 0 || mutation_shrink > 1)
      throw std::invalid_argument("ga.mutation_shrink must be in [0, 1]");
    if (blend_alpha < 0) throw std::invalid_argument("ga.blend_alpha must be >= 0");
  }
};

struct GATelemetryRow {
  int restart = 0;
  int generation = 0;
  double best = 0;
  double mean = 0;
};

struct GAResult {
  std::vector<double> best_point;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<GATelemetryRow> telemetry;
};

using BoxBounds = std::vector<std::array<double, 2>>;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Minimizes fitness over the box. Deterministic for a fixed seed regardless
// of the worker count; seed_points are injected into the initial population
// of every restart. The returned point always satisfies the bounds.
inline GAResult ga_minimize(const std::function<double(std::span<const double>)>& fitness,
                            const BoxBounds& bounds, const GAConfig& cfg,
                            const std::vector<std::vector<double>>& seed_points = {}) {
  cfg.validate();
  const std::size_t dim = bounds.size();
  if (dim == 0) throw std::invalid_argument("ga bounds are empty");
  for (const auto& b : bounds)
    if (!(b[0] <= b[1])) throw std::invalid_argument("ga bound lower > upper");
  for (const auto& s : seed_points)
    if (s.size() != dim) throw std::invalid_argument("ga seed point has wrong dimension");

  GAResult result;
  const std::size_t pop_size = static_cast<std::size_t>(cfg.population);
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    std::mt19937_64 rng(detail::splitmix64(cfg.seed ^ detail::splitmix64(
                            0x9e3779b97f4a7c15ULL * (restart + 1))));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pidx(0, pop_size - 1);
    auto clamp_to_box = [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < dim; ++i) g[i] = std::clamp(g[i], bounds[i][0], bounds[i][1]);
    };

    std::vector<std::vector<double>> pop(pop_size, std::vector<double>(dim));
    for (auto& ind : pop)
      for (std::size_t i = 0; i < dim; ++i)
        ind[i] = bounds[i][0] + u01(rng) * (bounds[i][1] - bounds[i][0]);
    for (std::size_t s = 0; s < seed_points.size() && s < pop_size; ++s) {
      pop[s] = seed_points[s];
      clamp_to_box(pop[s]);
    }

    std::vector<double> values(pop_size);
    std::vector<std::size_t> order(pop_size);
    for (int gen = 0; gen < cfg.generations; ++gen) {
      parallel_for(pop_size, cfg.workers,
                   [&](std::size_t i) { values[i] = fitness(pop[i]); });
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return values[a] != values[b] ? values[a] < values[b] : a < b;
      });
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(pop_size);
      result.telemetry.push_back({restart, gen, values[order[0]], mean});
      if (values[order[0]] < result.best_value) {
        result.best_value = values[order[0]];
        result.best_point = pop[order[0]];
      }
      if (gen + 1 == cfg.generations) break;

      std::vector<std::vector<double>> next;
      next.reserve(pop_size);
      for (int e = 0; e < cfg.elites && next.size() < pop_size; ++e)
        next.push_back(pop[order[e]]);
      auto tournament_pick = [&]() -> std::size_t {
        std::size_t best = pidx(rng);
        for (int k = 1; k < cfg.tournament; ++k) {
          const std::size_t j = pidx(rng);
          if (values[j] < values[best] || (values[j] == values[best] && j < best))
            best = j;
        }
        return best;
      };
      const double scale =
          cfg.mutation_scale *
          (1.0 - cfg.mutation_shrink * static_cast<double>(gen) /
                     static_cast<double>(cfg.generations));
      while (next.size() < pop_size) {
        const std::size_t ia = tournament_pick();
        const std::size_t ib = tournament_pick();
        std::vector<double> child(dim);
        if (u01(rng) < cfg.crossover_rate) {
          for (std::size_t i = 0; i < dim; ++i) {
            const double lo = std::min(pop[ia][i], pop[ib][i]);
            const double hi = std::max(pop[ia][i], pop[ib][i]);
            const double d = hi - lo;
            child[i] = lo - cfg.blend_alpha * d +
                       u01(rng) * (d + 2.0 * cfg.blend_alpha * d);
          }
        } else {
          child = pop[ia];
        }
        for (std::size_t i = 0; i < dim; ++i)
          if (u01(rng) < cfg.mutation_rate)
            child[i] += gauss(rng) * scale * (bounds[i][1] - bounds[i][0]);
        clamp_to_box(child);
        next.push_back(std::move(child));
      }
      pop = std::move(next);
    }
  }
  return result;
}

inline double rms(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("rms of an empty range");
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc / static_cast<double>(values.size()));
}

// ---------------------------------------------------------------------------
// mass-distribution optimization

struct MassOptResult {
  MassParams best;
  double rms_optimized = 0.0;
  double rms_baseline = 0.0;  // at zero added mass
  // ideal spring curve (theta, torque) at the N reference samples, sample order
  std::vector<std::array<double, 2>> sigma_star;
  CenterReport center;
  std::vector<GATelemetryRow> telemetry;
};

// Minimizes the RMS of the feedforward torque over the N reference samples.
// The fitness never integrates the dynamics: every sample is evaluated
// through the station polynomials and the nu formula. The zero-added-mass
// point is injected into every restart, so the returned design can never be
// worse than the baseline.
//
// Feasibility: besides the centered-equilibrium sign test, alpha must keep
// one sign and stay above a small fraction of its own peak over the window
// inflated by guard_margin on both sides. The zero dynamics are valid on an
// open neighborhood of the orbit, so a design whose alpha grazes zero at or
// just outside the turning points is rejected even when every sample looks
// benign.
inline MassOptResult optimize_mass(const MechanismModel& model,
                                   const ReferenceTrajectory& ref, int n_samples,
                                   const MassBounds& bounds, const GAConfig& cfg,
                                   double fd_scale = 1e-6, double guard_margin = 0.15,
                                   double alpha_floor = 0.02) {
  const auto samples = sample(ref, n_samples);
  const PhaseMaps maps = phase_maps(ref, n_samples);

  std::vector<SliceStation> stations;
  stations.reserve(samples.size());
  JointConfig warm = branch_guess(model, {samples.front().pos, ref.height});
  for (const auto& s : samples) {
    stations.push_back(make_station(model, s.pos, ref.height, warm, fd_scale));
    warm = stations.back().q;
  }
  for (const auto& st : stations)
    if (std::abs(st.zeta_s) < 1e-9)
      throw ZetaSVanishes("zeta_s vanished at x=" + format_sig(st.x));

  // guard stations on both flanks, built outward until the workspace ends
  std::vector<SliceStation> guard_stations;
  {
    const int per_side = 25;
    const double band = guard_margin * ref.stroke();
    for (const double sign : {-1.0, 1.0}) {
      const double edge = sign < 0 ? ref.x_min : ref.x_max;
      for (int i = 1; i <= per_side; ++i) {
        const double x = edge + sign * band * i / per_side;
        try {
          guard_stations.push_back(
              make_station(model, x, ref.height, branch_guess(model, {x, ref.height}),
                           fd_scale));
        } catch (const std::exception& ex) {
          log_debug("guard station at x=" + format_sig(x) + " unavailable: " + ex.what());
          break;
        }
      }
    }
  }

  const std::size_t n = stations.size();
  std::vector<double> rho_d(n), rho_dd(n), vel(n), xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    rho_d[i] = maps.rho_d(stations[i].x);
    rho_dd[i] = maps.rho_dd(stations[i].x);
    vel[i] = samples[i].vel;
    xs[i] = stations[i].x;
  }

  struct Eval {
    double rms = 0.0;
    bool ok = false;        // alpha keeps one sign with margin over the inflated window
    bool feasible = false;  // bracketed equilibrium with omega_s > 0
  };
  auto evaluate = [&](const MassParams& pm, std::vector<double>* sigma_out,
                      CenterReport* center_out) -> Eval {
    Eval ev;
    double sumsq = 0.0;
    double prev_ratio = 0.0;
    double alpha_sign = 0.0;
    double alpha_min = std::numeric_limits<double>::infinity();
    double alpha_max = 0.0;
    bool have_bracket = false;
    CenterReport rep;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& st = stations[i];
      const StationEval e = eval_station(st, pm);
      const double alpha = station_alpha(st, e);
      if (std::abs(alpha) < 1e-12) return ev;  // not evaluable
      if (i == 0) alpha_sign = alpha > 0 ? 1.0 : -1.0;
      if (alpha * alpha_sign < 0.0) return ev;  // singularity inside the window
      alpha_min = std::min(alpha_min, std::abs(alpha));
      alpha_max = std::max(alpha_max, std::abs(alpha));
      const double beta = station_beta(st, e);
      const double gamma_hat = -alpha * rho_dd[i] - beta * rho_d[i];
      const double zeta_u = st.B2 * e.Ugx - st.B1 * e.Ugy;
      const double sigma = (gamma_hat - zeta_u) / st.zeta_s;
      const double v2 = vel[i] * vel[i];
      const double c1 = 0.5 * e.dM11dx * v2;
      const double c2 = (e.dM12dx - 0.5 * e.dM11dy) * v2;
      const double g1 = sigma * st.q4x + e.Ugx;
      const double g2 = sigma * st.q4y + e.Ugy;
      const double nu = (e.M12 * (c1 + g1) - e.M11 * (c2 + g2)) / (-alpha);
      sumsq += nu * nu;
      if (sigma_out) (*sigma_out)[i] = sigma;
      const double ratio = gamma_hat / alpha;
      if (i > 0 && !have_bracket && prev_ratio * ratio < 0.0) {
        have_bracket = true;
        rep.omega_s = (ratio - prev_ratio) / (xs[i] - xs[i - 1]);
        rep.r_x0 = xs[i - 1] - prev_ratio / rep.omega_s;
        rep.x1 = xs[i - 1];
        rep.x2 = xs[i];
      }
      prev_ratio = ratio;
    }
    for (const auto& st : guard_stations) {
      const double alpha = station_alpha(st, eval_station(st, pm));
      if (alpha * alpha_sign < 0.0) return ev;
      alpha_min = std::min(alpha_min, std::abs(alpha));
      alpha_max = std::max(alpha_max, std::abs(alpha));
    }
    if (alpha_min < alpha_floor * alpha_max) return ev;
    ev.ok = true;
    ev.rms = std::sqrt(sumsq / static_cast<double>(n));
    ev.feasible = have_bracket && rep.omega_s > 0.0;
    if (center_out && have_bracket) *center_out = rep;
    return ev;
  };

  const Eval baseline = evaluate(MassParams{}, nullptr, nullptr);
  if (!baseline.ok)
    throw AlphaVanishes("baseline mass distribution is not evaluable on the reference");
  const double penalty = 1e3 * std::max(baseline.rms, 1e-3);

  std::atomic<bool> any_feasible{false};
  auto fitness = [&](std::span<const double> genes) -> double {
    const MassParams pm = MassParams::from_flat(genes);
    const Eval ev = evaluate(pm, nullptr, nullptr);
    if (!ev.ok) return 2.0 * penalty;
    if (!ev.feasible) return ev.rms + penalty;
    any_feasible.store(true, std::memory_order_relaxed);
    return ev.rms;
  };

  const auto box = mass_param_box(model, bounds);
  const BoxBounds ga_bounds(box.begin(), box.end());
  const GAResult ga = ga_minimize(fitness, ga_bounds, cfg, {{0.0, 0.0, 0.0, 0.0}});
  if (!any_feasible.load())
    throw InfeasibleProblem(
        "no mass distribution with a centered equilibrium found within the box");

  MassOptResult result;
  result.best = MassParams::from_flat(ga.best_point);
  result.telemetry = ga.telemetry;
  result.rms_baseline = baseline.rms;
  std::vector<double> sigma(n);
  const Eval final_eval = evaluate(result.best, &sigma, &result.center);
  if (!final_eval.ok || !final_eval.feasible)
    throw InfeasibleProblem("optimizer returned an infeasible mass distribution");
  result.rms_optimized = final_eval.rms;
  result.sigma_star.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    result.sigma_star.push_back({stations[i].theta, sigma[i]});
  return result;
}

// ---------------------------------------------------------------------------
// spring fitting

struct SpringFitResult {
  SpringParams best;
  double mean_square_error = 0.0;
  std::vector<double> residuals;  // fit minus target, per table row
  std::vector<GATelemetryRow> telemetry;
};

// Fits a baseline spring plus n_pairs sub-spring pairs to the (theta, torque)
// table in the mean-square sense. warm_starts with at most n_pairs pairs are
// padded with zero-stiffness pairs and injected into the initial population.
inline SpringFitResult optimize_spring(std::span<const std::array<double, 2>> table,
                                       int n_pairs, double k_max, const GAConfig& cfg,
                                       std::span<const SpringParams> warm_starts = {}) {
  if (table.empty()) throw EmptyTable("sigma table is empty");
  if (n_pairs < 0) throw std::invalid_argument("sub-spring pair count must be >= 0");
  if (!(k_max > 0)) throw std::invalid_argument("k_max must be > 0");
  const std::vector<std::array<double, 2>> rows(table.begin(), table.end());
  double tmin = rows.front()[0], tmax = rows.front()[0];
  for (const auto& r : rows) {
    tmin = std::min(tmin, r[0]);
    tmax = std::max(tmax, r[0]);
  }

  BoxBounds bounds;
  bounds.push_back({0.0, k_max});
  bounds.push_back({tmin, tmax});
  for (int j = 0; j < n_pairs; ++j) {
    bounds.push_back({-k_max, k_max});
    bounds.push_back({tmin, tmax});
    bounds.push_back({-k_max, k_max});
    bounds.push_back({tmin, tmax});
  }

  auto fitness = [&rows, n_pairs](std::span<const double> g) -> double {
    double acc = 0.0;
    for (const auto& r : rows) {
      const double theta = r[0];
      double s = g[0] * (theta - g[1]);
      for (int j = 0; j < n_pairs; ++j) {
        const std::size_t b = 2 + 4 * static_cast<std::size_t>(j);
        if (theta >= g[b + 1]) s += g[b] * (theta - g[b + 1]);
        if (theta <= g[b + 3]) s += g[b + 2] * (theta - g[b + 3]);
      }
      const double d = s - r[1];
      acc += d * d;
    }
    return acc / static_cast<double>(rows.size());
  };

  // Warm starts are padded with zero-stiffness pairs, which leave the fit
  // value untouched (nesting). Several threshold placements are seeded so the
  // crossover can explore breakpoint positions around a known-good fit: the
  // angle of the largest residual plus the quartiles of the band.
  std::vector<std::vector<double>> seeds;
  for (const auto& w : warm_starts) {
    if (static_cast<int>(w.pairs.size()) > n_pairs) continue;
    double theta_worst = tmin;
    double worst = -1.0;
    for (const auto& r : rows) {
      const double res = std::abs(eval_spring(w, r[0]) - r[1]);
      if (res > worst) {
        worst = res;
        theta_worst = r[0];
      }
    }
    const double placements[] = {tmin, theta_worst, 0.25 * tmin + 0.75 * tmax,
                                 0.5 * (tmin + tmax), 0.75 * tmin + 0.25 * tmax};
    for (const double at : placements) {
      SpringParams padded = w;
      while (static_cast<int>(padded.pairs.size()) < n_pairs)
        padded.pairs.push_back({0.0, at, 0.0, at});
      seeds.push_back(padded.flatten());
      if (w.pairs.size() == static_cast<std::size_t>(n_pairs)) break;
    }
  }

  const GAResult ga = ga_minimize(fitness, bounds, cfg, seeds);
  SpringFitResult result;
  result.best = SpringParams::from_flat(ga.best_point);
  result.mean_square_error = ga.best_value;
  result.telemetry = ga.telemetry;
  result.residuals.reserve(rows.size());
  for (const auto& r : rows)
    result.residuals.push_back(eval_spring(result.best, r[0]) - r[1]);
  return result;
}

}  // namespace zdshape
