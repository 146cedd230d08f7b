#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "broker_nash/io.hpp"

namespace broker_nash {

enum ExitCode : int { kSuccess = 0, kVerificationFailed = 1, kConfigError = 2, kNumericalFailure = 3 };

struct SolveArtifacts {
  SystemMatrices matrices;
  RiccatiSolution riccati;
  OffsetGrid offset;
  BoundReport bound;
  ConditionReport conditions;
};

inline SolveArtifacts solve_pipeline(const ModelParams& prm, std::size_t n_steps,
                                     SolverChoice choice) {
  SolveArtifacts a;
  a.matrices = assemble_matrices(prm);
  a.bound = existence_bound(a.matrices, prm.horizon_T);
  a.conditions = verify_freiling_conditions(a.matrices);
  a.riccati = solve_riccati(a.matrices, prm, TimeGrid(prm.horizon_T, n_steps), choice);
  a.offset = solve_offset_odes(a.riccati.riccati, prm);
  return a;
}

namespace detail {

inline std::filesystem::path output_dir(const ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.outputs);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Maps library exceptions onto exit codes.
template <class Body>
int guarded(std::ostream& log, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const SolverError& e) {
    log << "numerical failure: " << e.what() << '\n';
    return e.kind() == ErrorKind::InvalidInput ? kConfigError : kNumericalFailure;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kNumericalFailure;
  }
}

inline Json solve_summary(const SolveArtifacts& a) {
  Json j;
  j["method"] = to_string(a.riccati.riccati.method);
  j["fallback_reason"] =
      a.riccati.fallback_reason ? Json(*a.riccati.fallback_reason) : Json(nullptr);
  j["max_residual"] = a.riccati.riccati.max_residual;
  j["min_condition_R"] =
      a.riccati.pair ? Json(a.riccati.pair->min_condition_R) : Json(nullptr);
  return j;
}

inline double band_width(const MonteCarloReport& rep, Process p, std::size_t node) {
  const auto* b = rep.band(p);
  const auto i = rep.band_index(node);
  if (!b || !i) return std::nan("");
  return b->q95[*i] - b->q05[*i];
}

inline std::string value_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline MonteCarloReport run_simulation(const ExperimentConfig& cfg, const SolveArtifacts& a) {
  return simulate_equilibrium(cfg.params, a.riccati.riccati, a.offset, cfg.n_paths, cfg.seed,
                              simulation_options(cfg));
}

inline int check_non_finite(const MonteCarloReport& rep, std::ostream& log) {
  if (static_cast<double>(rep.non_finite_paths) > 1e-3 * static_cast<double>(rep.n_paths)) {
    log << "numerical failure: " << rep.non_finite_paths << " of " << rep.n_paths
        << " paths became non-finite\n";
    return kNumericalFailure;
  }
  return kSuccess;
}

}  // namespace detail

/// Writes riccati.csv, offset.csv, bound_report.json, conditions.json and
/// solve_summary.json.
inline int cmd_solve(const ExperimentConfig& cfg, std::ostream& log) {
  return detail::guarded(log, [&] {
    const auto dir = detail::output_dir(cfg);
    const Json config = to_json(cfg);
    const auto a = solve_pipeline(cfg.params, cfg.n_steps, solver_choice(cfg));
    write_riccati_csv((dir / "riccati.csv").string(), a.riccati.riccati, config);
    write_offset_csv((dir / "offset.csv").string(), a.offset, config);
    write_json((dir / "bound_report.json").string(),
               Json{{"config", config}, {"bound", to_json(a.bound)}});
    write_json((dir / "conditions.json").string(),
               Json{{"config", config}, {"conditions", to_json(a.conditions)}});
    write_json((dir / "solve_summary.json").string(),
               Json{{"config", config}, {"solve", detail::solve_summary(a)}});
    log << "solved with " << to_string(a.riccati.riccati.method) << " Riccati solver on "
        << cfg.n_steps << " steps; outputs in " << dir.string() << '\n';
    return int{kSuccess};
  });
}

/// One simulation per sweep value, each in its own sub-directory, plus a
/// sweep.json summary of the mid-horizon band widths.
inline int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  return detail::guarded(log, [&] {
    if (!cfg.sweep) throw ConfigError("sweep requires a 'sweep' section in the config");
    const auto dir = detail::output_dir(cfg);
    const Json config = to_json(cfg);
    Json results = Json::array();
    std::vector<double> broker_widths;
    int status = kSuccess;
    for (double v : cfg.sweep->values) {
      ExperimentConfig run = cfg;
      run.sweep.reset();
      *param_by_name(run.params, cfg.sweep->parameter) = v;
      run.outputs = (dir / ("sweep_" + cfg.sweep->parameter + "_" + detail::value_tag(v))).string();
      const Json run_config = to_json(run);
      Json entry{{"value", v}};
      try {
        const auto a = solve_pipeline(run.params, run.n_steps, solver_choice(run));
        const auto rep = detail::run_simulation(run, a);
        const auto sub = detail::output_dir(run);
        write_json((sub / "report.json").string(),
                   Json{{"config", run_config}, {"report", to_json(rep)}});
        write_bands_csv((sub / "quantile_bands.csv").string(), rep, run_config);
        const std::size_t mid = run.n_steps / 2;
        const double wb = detail::band_width(rep, Process::qB, mid);
        entry["status"] = "ok";
        entry["broker_band_width_mid"] = wb;
        entry["informed_band_width_mid"] = detail::band_width(rep, Process::qI, mid);
        entry["non_finite_paths"] = rep.non_finite_paths;
        broker_widths.push_back(wb);
        if (detail::check_non_finite(rep, log) != kSuccess) status = kNumericalFailure;
      } catch (const SolverError& e) {
        entry["status"] = "error";
        entry["error"] = e.what();
        log << cfg.sweep->parameter << " = " << v << ": " << e.what() << '\n';
        status = kNumericalFailure;
      }
      results.push_back(entry);
    }
    Json summary{{"config", config}, {"parameter", cfg.sweep->parameter},
                 {"values", cfg.sweep->values}, {"results", results}};
    if (broker_widths.size() == cfg.sweep->values.size()) {
      bool non_increasing = true;
      for (std::size_t i = 1; i < broker_widths.size(); ++i)
        non_increasing = non_increasing && broker_widths[i] <= broker_widths[i - 1];
      summary["broker_band_non_increasing"] = non_increasing;
    } else {
      summary["broker_band_non_increasing"] = nullptr;
    }
    write_json((dir / "sweep.json").string(), summary);
    log << "sweep over " << cfg.sweep->parameter << " written to " << dir.string() << '\n';
    return status;
  });
}

/// Writes report.json, quantile_bands.csv and (if sample_paths > 0)
/// paths.csv. A config with a sweep section runs the sweep instead.
inline int cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.sweep) return cmd_sweep(cfg, log);
  return detail::guarded(log, [&] {
    const auto dir = detail::output_dir(cfg);
    const Json config = to_json(cfg);
    const auto a = solve_pipeline(cfg.params, cfg.n_steps, solver_choice(cfg));
    const auto rep = detail::run_simulation(cfg, a);
    write_json((dir / "report.json").string(), Json{{"config", config}, {"report", to_json(rep)}});
    write_bands_csv((dir / "quantile_bands.csv").string(), rep, config);
    if (!rep.samples.empty()) write_paths_csv((dir / "paths.csv").string(), rep.samples, config);
    log << "simulated " << rep.n_paths << " paths on " << cfg.n_steps << " steps; outputs in "
        << dir.string() << '\n';
    return detail::check_non_finite(rep, log);
  });
}

namespace detail {

struct CheckList {
  Json items = Json::array();
  bool all_pass = true;

  void add(const std::string& name, double statistic, std::optional<double> se,
           std::optional<bool> pass, const std::string& note = {}) {
    Json c{{"check", name},
           {"statistic", statistic},
           {"standard_error", se ? Json(*se) : Json(nullptr)},
           {"pass", pass ? Json(*pass) : Json(nullptr)}};
    if (!note.empty()) c["note"] = note;
    items.push_back(c);
    if (pass && !*pass) all_pass = false;
  }
};

}  // namespace detail

/// Runs the oracle checks and writes verify_report.json; exit 1 if any fails.
/// If <outputs>/riccati.csv exists it is checked against a fresh solve.
inline int cmd_verify(const ExperimentConfig& cfg, std::ostream& log) {
  return detail::guarded(log, [&] {
    const auto dir = detail::output_dir(cfg);
    const Json config = to_json(cfg);
    const ModelParams& prm = cfg.params;
    detail::CheckList checks;

    const auto a = solve_pipeline(prm, cfg.n_steps, solver_choice(cfg));
    const RiccatiGrid& rg = a.riccati.riccati;
    const TimeGrid& grid = rg.grid;
    const SystemMatrices& m = a.matrices;

    checks.add("riccati_terminal_value", (rg.P.back() - m.G).cwiseAbs().maxCoeff(), {},
               rg.P.back() == m.G);

    try {
      const auto direct = solve_riccati_direct(m, grid);
      const auto lin = solve_riccati_linearized(m, grid);
      double gap = 0.0;
      for (std::size_t k = 0; k < grid.n_nodes(); ++k)
        gap = std::max(gap, (direct.P[k] - lin.riccati.P[k]).cwiseAbs().maxCoeff());
      checks.add("riccati_cross_method", gap, {}, gap <= 1e-6);
    } catch (const SolverError& e) {
      checks.add("riccati_cross_method", std::nan(""), {}, std::nullopt,
                 std::string("not comparable: ") + e.what());
    }

    checks.add("riccati_residual", rg.max_residual, {}, std::nullopt,
               "centered-difference residual; dominated by the terminal boundary layer");

    const auto file = dir / "riccati.csv";
    if (std::filesystem::exists(file)) {
      try {
        RiccatiGrid loaded = read_riccati_csv(file.string());
        if (!(loaded.grid == grid))
          throw SolverError(ErrorKind::GridMismatch, "riccati.csv grid differs from the config");
        const auto fresh_res = riccati_residual_profile(rg, m);
        const auto file_res = riccati_residual_profile(loaded, m);
        double gap = 0.0, excess = 0.0;
        for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
          gap = std::max(gap, (loaded.P[k] - rg.P[k]).cwiseAbs().maxCoeff());
          excess = std::max(excess, file_res[k] - fresh_res[k]);
        }
        checks.add("riccati_file_residual_excess", excess, {}, excess <= 1e-3);
        checks.add("riccati_file_vs_fresh", gap, {}, gap <= 1e-6);
      } catch (const std::exception& e) {
        checks.add("riccati_file_residual_excess", std::nan(""), {}, false, e.what());
      }
    }

    if (prm.decay_p == 0.0) {
      double col = 0.0;
      for (const auto& P : rg.P) col = std::max(col, P.col(2).norm());
      checks.add("no_decay_third_column", col, {}, col <= 1e-10);
    }

    const OffsetGrid& og = a.offset;
    const std::size_t n = grid.n_steps();
    const double terminal = std::max({std::abs(og.g1[n]), std::abs(og.g2[n]), std::abs(og.h1[n]),
                                      std::abs(og.h2[n]), std::abs(og.f1[n]), std::abs(og.f2[n])});
    checks.add("offset_terminal_zero", terminal, {}, terminal == 0.0);
    {
      const auto fs = build_fundamental_solution(rg, m);
      double worst = 0.0;
      for (std::uint32_t i = 0; i < 20; ++i) {
        const auto z = normal_pair(cfg.seed, 0xFFFFFFFFull, i, 3);
        const auto w = Philox4x32::block({0xFFFFFFFFu, 0u, i, 4u}, Philox4x32::key_from_seed(cfg.seed));
        const std::size_t k = w[0] % (n + 1);
        const double alpha = z[0] * prm.sigma_alpha + 1.0, xi = z[1] * prm.sigma_xi + 1.0;
        const Vec3 q = ell_quadrature(fs, grid.node(k), alpha, xi, prm);
        const Vec3 ode = og.ell(k, alpha, xi);
        worst = std::max(worst, (q - ode).norm() / (1.0 + ode.norm()));
      }
      checks.add("offset_quadrature", worst, {}, worst <= 1e-5);
    }

    checks.add("freiling_cdg_positive_definite", a.conditions.cdg_matrix.determinant(), {},
               std::nullopt, a.conditions.cdg_positive_definite ? "true" : "false");
    checks.add("freiling_L_sym_negative_semidefinite", a.conditions.L_sym_eigenvalues.maxCoeff(),
               {}, std::nullopt, a.conditions.L_sym_negative_semidefinite ? "true" : "false");

    if (cfg.picard) {
      const auto& ps = *cfg.picard;
      const auto pm = assemble_matrices(ps.params);
      const auto bound = existence_bound(pm, ps.params.horizon_T);
      const auto pr = picard_iterate(pm, ps.params, ps.solver);
      const bool guaranteed = bound.satisfied || (bound.t_star && ps.params.horizon_T < *bound.t_star);
      checks.add("picard_convergence", pr.final_gap, {},
                 guaranteed ? std::optional<bool>(pr.converged && pr.contraction_estimate < 1.0)
                            : std::nullopt,
                 guaranteed ? "" : "outside the sufficient bound; reported only");
      if (pr.converged) {
        const auto cf = closed_form_deterministic_path(pm, ps.params, ps.solver.n_steps);
        const double gap = trajectory_gap(pr, cf);
        checks.add("picard_vs_closed_form", gap, {}, gap <= 1e-5);
      }
    }

    if (cfg.gateaux) {
      const auto& gs = *cfg.gateaux;
      const auto ga = solve_pipeline(prm, gs.n_steps, solver_choice(cfg));
      const auto results = gateaux_equilibrium_check(prm, ga.riccati.riccati, ga.offset, gs.cfg);
      for (const auto& r : results) {
        const std::string tag = std::string(to_string(r.player)) + "_dir" + std::to_string(r.direction);
        const auto& e = r.at_equilibrium;
        checks.add("gateaux_zero_" + tag, e.estimate, e.std_error,
                   std::abs(e.estimate) <= 3.0 * e.std_error);
        checks.add("gateaux_perturbed_loss_" + tag, r.perturbed_gain, r.perturbed_gain_se,
                   r.perturbed_gain < -3.0 * r.perturbed_gain_se);
      }
    }

    write_json((dir / "verify_report.json").string(),
               Json{{"config", config}, {"checks", checks.items}, {"pass", checks.all_pass}});
    for (const auto& c : checks.items)
      log << (c["pass"].is_null() ? "INFO" : (c["pass"].get<bool>() ? "PASS" : "FAIL")) << "  "
          << c["check"].get<std::string>() << "  " << c["statistic"].dump() << '\n';
    return checks.all_pass ? int{kSuccess} : int{kVerificationFailed};
  });
}

}  // namespace broker_nash
