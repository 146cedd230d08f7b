#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "broker_nash/errors.hpp"
#include "broker_nash/offset.hpp"
#include "broker_nash/riccati.hpp"
#include "broker_nash/time_grid.hpp"

namespace broker_nash {

struct PicardConfig {
  std::size_t n_steps = 2000;
  std::size_t max_iters = 500;
  /// Sup-norm over the grid of the change in (X, Y) between iterates.
  double tol = 1e-12;
  double damping = 1.0;
};

struct PicardResult {
  TimeGrid grid;
  std::vector<Vec3> X_path;
  std::vector<Vec3> Y_path;
  std::size_t iterations = 0;
  double final_gap = 0.0;
  /// Ratio of the last two gaps.
  double contraction_estimate = 0.0;
  std::vector<double> gaps;
  bool converged = false;
  /// sup |Γ(X, Y) - (X, Y)| at the returned iterate.
  double residual = 0.0;
};

namespace detail {

inline void check_zero_noise(const ModelParams& prm) {
  if (prm.sigma_alpha != 0.0 || prm.sigma_xi != 0.0 || prm.sigma_S != 0.0)
    throw SolverError(ErrorKind::InvalidInput,
                      "the Picard oracle needs sigma_alpha = sigma_xi = sigma_S = 0");
}

inline double deterministic_alpha(const ModelParams& prm, double t) {
  return prm.alpha0 * std::exp(-prm.kappa_alpha * t);
}

inline double deterministic_xi(const ModelParams& prm, double t) {
  return prm.xi0 * std::exp(-prm.kappa_xi * t);
}

struct PicardMap {
  const SystemMatrices& m;
  const ModelParams& prm;
  const TimeGrid& grid;
  Vec3 X0;
  std::vector<Vec3> b, b_hat;

  PicardMap(const SystemMatrices& mat, const ModelParams& p, const TimeGrid& g)
      : m(mat), prm(p), grid(g), X0(p.qB0, p.qI0, p.Y0) {
    for (std::size_t k = 0; k < g.n_nodes(); ++k) {
      const double t = g.node(k);
      const double al = deterministic_alpha(p, t), xi = deterministic_xi(p, t);
      b.push_back(m.driver_b(xi));
      b_hat.push_back(m.driver_b_hat(al, xi));
    }
  }

  /// Γ: X <- X0 + ∫_0^t (AX + BY + b),  Y <- G X_T - ∫_t^T (ÂX + B̂Y + b̂),
  /// both integrals by the cumulative trapezoid rule.
  void apply(const std::vector<Vec3>& X, const std::vector<Vec3>& Y, std::vector<Vec3>& Xn,
             std::vector<Vec3>& Yn) const {
    const std::size_t n = grid.n_steps();
    const double dt = grid.dt();
    Xn.resize(n + 1);
    Yn.resize(n + 1);
    auto fx = [&](std::size_t k) -> Vec3 { return m.A * X[k] + m.B * Y[k] + b[k]; };
    auto fy = [&](std::size_t k) -> Vec3 { return m.A_hat * X[k] + m.B_hat * Y[k] + b_hat[k]; };
    Xn[0] = X0;
    Vec3 prev = fx(0);
    for (std::size_t k = 0; k < n; ++k) {
      const Vec3 next = fx(k + 1);
      Xn[k + 1] = Xn[k] + 0.5 * dt * (prev + next);
      prev = next;
    }
    Yn[n] = m.G * X[n];
    prev = fy(n);
    for (std::size_t k = n; k-- > 0;) {
      const Vec3 next = fy(k);
      Yn[k] = Yn[k + 1] - 0.5 * dt * (prev + next);
      prev = next;
    }
  }
};

inline double sup_gap(const std::vector<Vec3>& X1, const std::vector<Vec3>& Y1,
                      const std::vector<Vec3>& X2, const std::vector<Vec3>& Y2) {
  double g = 0.0;
  for (std::size_t k = 0; k < X1.size(); ++k) {
    g = std::max(g, (X1[k] - X2[k]).cwiseAbs().maxCoeff());
    g = std::max(g, (Y1[k] - Y2[k]).cwiseAbs().maxCoeff());
  }
  return g;
}

}  // namespace detail

/// Fixed-point iteration of the zero-noise FBSDE map, starting from
/// X ≡ X0, Y ≡ 0. Never throws for lack of convergence; see picard_solve.
inline PicardResult picard_iterate(const SystemMatrices& m, const ModelParams& prm,
                                   const PicardConfig& cfg) {
  detail::check_zero_noise(prm);
  if (!(cfg.tol > 0.0)) throw SolverError(ErrorKind::InvalidInput, "tol must be > 0");
  if (!(cfg.damping > 0.0 && cfg.damping <= 1.0))
    throw SolverError(ErrorKind::InvalidInput, "damping must lie in (0, 1]");
  if (cfg.n_steps == 0 || cfg.max_iters == 0)
    throw SolverError(ErrorKind::InvalidInput, "n_steps and max_iters must be positive");

  PicardResult r;
  r.grid = TimeGrid(prm.horizon_T, cfg.n_steps);
  const detail::PicardMap gamma(m, prm, r.grid);
  std::vector<Vec3> X(r.grid.n_nodes(), gamma.X0), Y(r.grid.n_nodes(), Vec3::Zero());
  std::vector<Vec3> Xn, Yn;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    gamma.apply(X, Y, Xn, Yn);
    if (cfg.damping < 1.0)
      for (std::size_t k = 0; k < X.size(); ++k) {
        Xn[k] = (1.0 - cfg.damping) * X[k] + cfg.damping * Xn[k];
        Yn[k] = (1.0 - cfg.damping) * Y[k] + cfg.damping * Yn[k];
      }
    const double gap = detail::sup_gap(X, Y, Xn, Yn);
    r.gaps.push_back(gap);
    std::swap(X, Xn);
    std::swap(Y, Yn);
    r.iterations = it;
    if (!std::isfinite(gap)) break;
    if (gap <= cfg.tol) {
      r.converged = true;
      break;
    }
  }
  r.final_gap = r.gaps.back();
  if (r.gaps.size() >= 2 && r.gaps[r.gaps.size() - 2] > 0.0)
    r.contraction_estimate = r.gaps.back() / r.gaps[r.gaps.size() - 2];
  gamma.apply(X, Y, Xn, Yn);
  r.residual = detail::sup_gap(X, Y, Xn, Yn);
  r.X_path = std::move(X);
  r.Y_path = std::move(Y);
  return r;
}

/// As picard_iterate, but NoConvergence (carrying the final gap) when the
/// tolerance is not reached within max_iters.
inline PicardResult picard_solve(const SystemMatrices& m, const ModelParams& prm,
                                 const PicardConfig& cfg) {
  PicardResult r = picard_iterate(m, prm, cfg);
  if (!r.converged)
    throw SolverError(ErrorKind::NoConvergence,
                      "Picard iteration did not reach tol; final gap " + std::to_string(r.final_gap),
                      r.final_gap);
  return r;
}

struct DeterministicPath {
  TimeGrid grid;
  std::vector<Vec3> X;
  std::vector<Vec3> Y;
};

/// Zero-noise trajectory of the closed-form feedback Y = P X + l. P and l come
/// from the Riccati and offset solvers on the doubled grid, whose odd nodes
/// supply the RK4 midpoints for X' = A X + B Y + b.
inline DeterministicPath closed_form_deterministic_path(const SystemMatrices& m,
                                                        const ModelParams& prm,
                                                        std::size_t n_steps,
                                                        SolverChoice choice = SolverChoice::automatic) {
  detail::check_zero_noise(prm);
  const TimeGrid fine(prm.horizon_T, 2 * n_steps);
  const RiccatiGrid rg = solve_riccati(m, prm, fine, choice).riccati;
  const OffsetGrid og = solve_offset_odes(rg, prm);

  auto feedback = [&](std::size_t j, const Vec3& X) -> Vec3 {
    const double t = fine.node(j);
    return rg.P[j] * X +
           og.ell(j, detail::deterministic_alpha(prm, t), detail::deterministic_xi(prm, t));
  };
  auto drift = [&](std::size_t j, const Vec3& X) -> Vec3 {
    const double xi = detail::deterministic_xi(prm, fine.node(j));
    return m.A * X + m.B * feedback(j, X) + m.driver_b(xi);
  };

  DeterministicPath out;
  out.grid = TimeGrid(prm.horizon_T, n_steps);
  out.X.resize(n_steps + 1);
  out.Y.resize(n_steps + 1);
  out.X[0] = Vec3(prm.qB0, prm.qI0, prm.Y0);
  const double H = out.grid.dt();
  for (std::size_t k = 0; k < n_steps; ++k) {
    const std::size_t j = 2 * k;
    const Vec3& x = out.X[k];
    const Vec3 k1 = drift(j, x);
    const Vec3 k2 = drift(j + 1, x + 0.5 * H * k1);
    const Vec3 k3 = drift(j + 1, x + 0.5 * H * k2);
    const Vec3 k4 = drift(j + 2, x + H * k3);
    out.X[k + 1] = x + (H / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  for (std::size_t k = 0; k <= n_steps; ++k) out.Y[k] = feedback(2 * k, out.X[k]);
  return out;
}

/// sup over nodes of the max-abs difference between two (X, Y) trajectories.
inline double trajectory_gap(const PicardResult& p, const DeterministicPath& c) {
  if (!(p.grid == c.grid))
    throw SolverError(ErrorKind::GridMismatch, "trajectories live on different grids");
  return detail::sup_gap(p.X_path, p.Y_path, c.X, c.Y);
}

}  // namespace broker_nash
