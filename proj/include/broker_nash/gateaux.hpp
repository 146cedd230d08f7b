#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "broker_nash/simulation.hpp"

namespace broker_nash {

struct GateauxConfig {
  std::vector<double> epsilon_list = {1e-2, 1e-3};
  std::size_t n_directions = 5;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 20240917;
  /// Sup-scale of the random directions (speed units).
  double direction_amplitude = 1.0;
  std::size_t fourier_modes = 4;
  /// Size of the finite perturbation used for the concavity checks.
  double perturbation = 0.5;
};

enum class Player { informed, broker };

inline const char* to_string(Player p) { return p == Player::informed ? "informed" : "broker"; }

struct GateauxEstimate {
  /// Difference quotient at the smallest epsilon: mean over paths and its SE.
  double estimate = 0.0;
  double std_error = 0.0;
  /// Mean difference quotient per entry of epsilon_list.
  std::vector<double> per_epsilon;
  /// Linear extrapolation to epsilon -> 0 from the two smallest epsilons
  /// (exact for functionals quadratic in epsilon).
  double richardson = 0.0;
  /// J(u + e n) + J(u - e n) - 2 J(u) at the smallest e.
  double second_difference = 0.0;
  double second_difference_se = 0.0;
};

/// A set of paths with their drivers and the speeds to be tested.
struct ControlEnsemble {
  std::vector<PathDrivers> drivers;
  std::vector<std::vector<double>> nu;
  std::vector<std::vector<double>> eta;
};

/// Smooth deterministic direction n(t) = amp · Σ_j (c_j cos(jπt/T) + s_j sin((j+1)πt/T)) / norm,
/// with coefficients drawn from the counter-based generator.
inline std::vector<double> fourier_direction(const TimeGrid& grid, std::uint64_t seed,
                                             std::size_t index, std::size_t modes,
                                             double amplitude) {
  std::vector<double> c(modes), s(modes);
  double norm = 0.0;
  for (std::size_t j = 0; j < modes; ++j) {
    const auto z = normal_pair(seed, index, static_cast<std::uint32_t>(j), 7);
    c[j] = z[0];
    s[j] = z[1];
    norm += std::abs(z[0]) + std::abs(z[1]);
  }
  std::vector<double> n(grid.n_nodes(), 0.0);
  if (norm == 0.0) return n;
  const double T = grid.horizon();
  for (std::size_t k = 0; k < n.size(); ++k) {
    const double t = grid.node(k);
    double v = 0.0;
    for (std::size_t j = 0; j < modes; ++j)
      v += c[j] * std::cos(std::numbers::pi * static_cast<double>(j) * t / T) +
           s[j] * std::sin(std::numbers::pi * static_cast<double>(j + 1) * t / T);
    n[k] = amplitude * v / norm;
  }
  return n;
}

namespace detail {

/// Integral-form J of `who` when its own speed path is shifted by
/// `shift`·dir. Runs only the Euler recursion for (qB, qI, Y) that the
/// integral representation needs; equals evaluate_performance on
/// propagate_open_loop up to rounding.
inline double shifted_value(const ModelParams& prm, const PathDrivers& d,
                            const std::vector<double>& nu, const std::vector<double>& eta,
                            const std::vector<double>& dir, double shift, Player who) {
  const std::size_t n = d.grid.n_steps();
  const double dt = d.grid.dt();
  const bool informed = who == Player::informed;
  double qB = prm.qB0, qI = prm.qI0, Y = prm.Y0;
  const double S0 = prm.S0 + prm.Y0;
  double acc = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double v = informed ? nu[k] : nu[k] + shift * dir[k];
    const double e = informed ? eta[k] + shift * dir[k] : eta[k];
    const double xi = d.xi[k];
    const double drift = d.alpha[k] + prm.impact_h * v - prm.decay_p * Y;
    double f;
    if (informed) {
      f = -prm.b * e * e + qI * (drift - 2.0 * prm.psi * e - prm.rI * qI);
    } else {
      f = -prm.a * v * v + prm.b * e * e + prm.c * xi * xi +
          qB * (drift - 2.0 * prm.phi * (v - e - xi) - prm.rB * qB);
    }
    acc += (k == 0 || k == n) ? 0.5 * f : f;
    if (k == n) break;
    qB = qB + (v - e - xi) * dt;
    qI = qI + e * dt;
    Y = Y + (prm.impact_h * v - prm.decay_p * Y) * dt;
  }
  const double q0 = informed ? prm.qI0 : prm.qB0;
  const double pen = informed ? prm.psi : prm.phi;
  return S0 * q0 - pen * q0 * q0 + acc * dt;
}

struct PathDifferences {
  std::vector<double> quotient;  // per epsilon
  double second = 0.0;
};

inline PathDifferences path_differences(const ModelParams& prm, const PathDrivers& d,
                                        const std::vector<double>& nu,
                                        const std::vector<double>& eta,
                                        const std::vector<double>& dir,
                                        const std::vector<double>& eps, Player who,
                                        double base) {
  PathDifferences out;
  out.quotient.resize(eps.size());
  for (std::size_t e = 0; e < eps.size(); ++e)
    out.quotient[e] = (shifted_value(prm, d, nu, eta, dir, eps[e], who) - base) / eps[e];
  const double e_min = *std::min_element(eps.begin(), eps.end());
  const double up = base + e_min * out.quotient[static_cast<std::size_t>(
                                       std::min_element(eps.begin(), eps.end()) - eps.begin())];
  out.second = up + shifted_value(prm, d, nu, eta, dir, -e_min, who) - 2.0 * base;
  return out;
}

inline GateauxEstimate aggregate(const std::vector<PathDifferences>& per_path,
                                 const std::vector<double>& eps) {
  GateauxEstimate g;
  const std::size_t ne = eps.size();
  const std::size_t i_min =
      static_cast<std::size_t>(std::min_element(eps.begin(), eps.end()) - eps.begin());
  g.per_epsilon.assign(ne, 0.0);
  std::vector<double> col(per_path.size());
  for (std::size_t e = 0; e < ne; ++e) {
    for (std::size_t i = 0; i < per_path.size(); ++i) col[i] = per_path[i].quotient[e];
    const auto s = summarize(col);
    g.per_epsilon[e] = s.mean;
    if (e == i_min) {
      g.estimate = s.mean;
      g.std_error = s.std_error;
    }
  }
  g.richardson = g.estimate;
  if (ne >= 2) {
    std::vector<std::size_t> order(ne);
    for (std::size_t e = 0; e < ne; ++e) order[e] = e;
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return eps[x] < eps[y]; });
    const double e1 = eps[order[0]], e2 = eps[order[1]];
    const double d1 = g.per_epsilon[order[0]], d2 = g.per_epsilon[order[1]];
    g.richardson = (e2 * d1 - e1 * d2) / (e2 - e1);
  }
  for (std::size_t i = 0; i < per_path.size(); ++i) col[i] = per_path[i].second;
  const auto s2 = summarize(col);
  g.second_difference = s2.mean;
  g.second_difference_se = s2.std_error;
  return g;
}

inline void check_config(const GateauxConfig& cfg) {
  if (cfg.epsilon_list.empty())
    throw SolverError(ErrorKind::InvalidInput, "epsilon_list must not be empty");
  for (double e : cfg.epsilon_list)
    if (!(e > 0.0)) throw SolverError(ErrorKind::InvalidInput, "epsilons must be > 0");
}

inline void check_ensemble(const ControlEnsemble& ens,
                           const std::vector<std::vector<double>>& direction,
                           const GateauxConfig& cfg) {
  check_config(cfg);
  if (ens.drivers.empty() || ens.nu.size() != ens.drivers.size() ||
      ens.eta.size() != ens.drivers.size())
    throw SolverError(ErrorKind::InvalidInput, "control ensemble is empty or ragged");
  if (direction.size() != 1 && direction.size() != ens.drivers.size())
    throw SolverError(ErrorKind::InvalidInput,
                      "direction must be one path or one path per ensemble member");
  for (std::size_t i = 0; i < ens.drivers.size(); ++i) {
    const std::size_t m = ens.drivers[i].grid.n_nodes();
    const auto& dir = direction.size() == 1 ? direction[0] : direction[i];
    if (ens.drivers[i].alpha.size() != m || ens.nu[i].size() != m || ens.eta[i].size() != m ||
        dir.size() != m)
      throw SolverError(ErrorKind::GridMismatch, "control or direction path does not match its grid");
  }
}

inline GateauxEstimate gateaux_ensemble(const ControlEnsemble& ens,
                                        const std::vector<std::vector<double>>& direction,
                                        const ModelParams& prm, const GateauxConfig& cfg,
                                        Player who) {
  check_ensemble(ens, direction, cfg);
  std::vector<PathDifferences> per_path(ens.drivers.size());
  parallel_for(per_path.size(), [&](std::size_t i) {
    const auto& dir = direction.size() == 1 ? direction[0] : direction[i];
    const double base = shifted_value(prm, ens.drivers[i], ens.nu[i], ens.eta[i], dir, 0.0, who);
    per_path[i] = path_differences(prm, ens.drivers[i], ens.nu[i], ens.eta[i], dir,
                                   cfg.epsilon_list, who, base);
  });
  return aggregate(per_path, cfg.epsilon_list);
}

}  // namespace detail

/// Difference quotients (J^I(nu, eta + e n) - J^I(nu, eta)) / e over the
/// ensemble, with J^I in its integral representation and common random
/// numbers across the compared evaluations.
inline GateauxEstimate gateaux_informed(const ControlEnsemble& ens,
                                        const std::vector<std::vector<double>>& direction,
                                        const ModelParams& prm, const GateauxConfig& cfg) {
  return detail::gateaux_ensemble(ens, direction, prm, cfg, Player::informed);
}

/// Broker counterpart: perturbation of nu, J^B in its integral representation.
inline GateauxEstimate gateaux_broker(const ControlEnsemble& ens,
                                      const std::vector<std::vector<double>>& direction,
                                      const ModelParams& prm, const GateauxConfig& cfg) {
  return detail::gateaux_ensemble(ens, direction, prm, cfg, Player::broker);
}

struct DirectionCheck {
  Player player = Player::informed;
  std::size_t direction = 0;
  /// derivative at the equilibrium
  GateauxEstimate at_equilibrium;
  /// J(u* + pert·n) - J(u*): mean and SE
  double perturbed_gain = 0.0;
  double perturbed_gain_se = 0.0;
  /// derivative at u* + pert·n in direction n (smallest epsilon)
  double perturbed_slope = 0.0;
  double perturbed_slope_se = 0.0;
};

/// Streaming best-response check at the equilibrium: paths are regenerated
/// from (seed, index) instead of stored, so memory does not grow with n_paths.
inline std::vector<DirectionCheck> gateaux_equilibrium_check(const ModelParams& prm,
                                                             const RiccatiGrid& rg,
                                                             const OffsetGrid& og,
                                                             const GateauxConfig& cfg) {
  detail::check_config(cfg);
  if (cfg.n_paths < 2) throw SolverError(ErrorKind::InvalidInput, "need at least two paths");
  if (cfg.n_directions == 0) return {};
  const TimeGrid& grid = rg.grid;
  std::vector<std::vector<double>> dirs;
  for (std::size_t j = 0; j < cfg.n_directions; ++j)
    dirs.push_back(fourier_direction(grid, cfg.seed, j, cfg.fourier_modes, cfg.direction_amplitude));
  const double e_min = *std::min_element(cfg.epsilon_list.begin(), cfg.epsilon_list.end());
  const double pert = cfg.perturbation;

  const std::size_t nd = dirs.size();
  struct Slot {
    std::vector<detail::PathDifferences> diff;  // [player * nd + dir]
    std::vector<double> gain, slope;
  };
  std::vector<Slot> slots(cfg.n_paths);
  parallel_for(cfg.n_paths, [&](std::size_t i) {
    const PathDrivers d = generate_drivers(prm, grid, cfg.seed, i);
    const PathBundle eq = simulate_equilibrium_path(prm, rg, og, d);
    Slot& s = slots[i];
    s.diff.resize(2 * nd);
    s.gain.resize(2 * nd);
    s.slope.resize(2 * nd);
    for (int p = 0; p < 2; ++p) {
      const Player who = p == 0 ? Player::informed : Player::broker;
      const double base = detail::shifted_value(prm, d, eq.nu, eq.eta, dirs[0], 0.0, who);
      for (std::size_t j = 0; j < nd; ++j) {
        const std::size_t slot = p * nd + j;
        s.diff[slot] = detail::path_differences(prm, d, eq.nu, eq.eta, dirs[j],
                                                cfg.epsilon_list, who, base);
        const double moved = detail::shifted_value(prm, d, eq.nu, eq.eta, dirs[j], pert, who);
        const double beyond =
            detail::shifted_value(prm, d, eq.nu, eq.eta, dirs[j], pert + e_min, who);
        s.gain[slot] = moved - base;
        s.slope[slot] = (beyond - moved) / e_min;
      }
    }
  });

  std::vector<DirectionCheck> out;
  std::vector<detail::PathDifferences> diffs(cfg.n_paths);
  std::vector<double> col(cfg.n_paths);
  for (int p = 0; p < 2; ++p) {
    for (std::size_t j = 0; j < nd; ++j) {
      const std::size_t slot = p * nd + j;
      DirectionCheck c;
      c.player = p == 0 ? Player::informed : Player::broker;
      c.direction = j;
      for (std::size_t i = 0; i < cfg.n_paths; ++i) diffs[i] = slots[i].diff[slot];
      c.at_equilibrium = detail::aggregate(diffs, cfg.epsilon_list);
      for (std::size_t i = 0; i < cfg.n_paths; ++i) col[i] = slots[i].gain[slot];
      auto s = summarize(col);
      c.perturbed_gain = s.mean;
      c.perturbed_gain_se = s.std_error;
      for (std::size_t i = 0; i < cfg.n_paths; ++i) col[i] = slots[i].slope[slot];
      s = summarize(col);
      c.perturbed_slope = s.mean;
      c.perturbed_slope_se = s.std_error;
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace broker_nash
