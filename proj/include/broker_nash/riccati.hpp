#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "broker_nash/errors.hpp"
#include "broker_nash/model.hpp"
#include "broker_nash/time_grid.hpp"

namespace broker_nash {

// Terminal-value matrix Riccati equation
//   P' = Â + B̂ P - P A - P B P,   P(T) = G,
// whose solution gives the linear part of the equilibrium feedback
// Y_t = l_t + P_t X_t.

enum class RiccatiMethod { direct, linearized };

inline const char* to_string(RiccatiMethod m) {
  return m == RiccatiMethod::direct ? "direct" : "linearized";
}

struct RiccatiOptions {
  /// RK4 substeps per grid interval; 0 picks them from the local stiffness.
  std::size_t substeps = 0;
  /// Largest dt·stiffness allowed per automatic substep; RK4 error in the
  /// terminal layer scales like its fourth power.
  double step_target = 0.025;
  double blowup_cap = 1e12;
  double rcond_floor = 1e-12;
};

struct RiccatiGrid {
  TimeGrid grid;
  std::vector<Mat3> P;
  double max_residual = 0.0;
  RiccatiMethod method = RiccatiMethod::direct;

  const Mat3& at(std::size_t k) const { return P[k]; }

  double gB(std::size_t k) const { return P[k](0, 0); }
  double gI(std::size_t k) const { return P[k](0, 1); }
  double gY(std::size_t k) const { return P[k](0, 2); }
  double hB(std::size_t k) const { return P[k](1, 0); }
  double hI(std::size_t k) const { return P[k](1, 1); }
  double hY(std::size_t k) const { return P[k](1, 2); }
  double fB(std::size_t k) const { return P[k](2, 0); }
  double fI(std::size_t k) const { return P[k](2, 1); }
  double fY(std::size_t k) const { return P[k](2, 2); }
};

/// R_t, T_t with P_t = T_t R_t^{-1}.
struct LinearizationPair {
  std::vector<Mat3> R;
  std::vector<Mat3> Tmat;
  double min_condition_R = 1.0;
};

struct ConditionReport {
  Mat3 cdg_matrix = Mat3::Zero();
  bool cdg_positive_definite = false;
  Eigen::Matrix<double, 6, 6> L = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> L_sym_eigenvalues = Eigen::Matrix<double, 6, 1>::Zero();
  bool L_sym_negative_semidefinite = false;
};

inline Mat3 riccati_rhs(const SystemMatrices& m, const Mat3& P) {
  return m.A_hat + m.B_hat * P - P * m.A - P * m.B * P;
}

namespace detail {

struct StiffnessBound {
  double norm_A = 0.0;
  double norm_B = 0.0;
  double norm_B_hat = 0.0;

  explicit StiffnessBound(const SystemMatrices& m)
      : norm_A(spectral_norm(m.A)),
        norm_B(spectral_norm(m.B)),
        norm_B_hat(spectral_norm(m.B_hat)) {}

  /// Bound on the Jacobian of the Riccati vector field at P.
  double at(const Mat3& P) const {
    return norm_A + norm_B_hat + 2.0 * norm_B * spectral_norm(P);
  }
};

inline std::size_t substeps_for(double dt, double stiffness, const RiccatiOptions& opts) {
  if (opts.substeps > 0) return opts.substeps;
  const double m = std::ceil(dt * stiffness / opts.step_target);
  if (!std::isfinite(m)) return 1;
  return std::max<std::size_t>(1, static_cast<std::size_t>(m));
}

inline bool exceeds(const Mat3& P, double cap) {
  return !P.allFinite() || P.cwiseAbs().maxCoeff() > cap;
}

}  // namespace detail

/// Number of RK4 substeps used on the interval ending at a node holding P.
inline std::size_t riccati_substeps(const SystemMatrices& m, double dt, const Mat3& P,
                                    const RiccatiOptions& opts = {}) {
  return detail::substeps_for(dt, detail::StiffnessBound(m).at(P), opts);
}

/// Max over interior nodes of the entrywise residual, with P' taken as a
/// centered difference. Endpoints are excluded.
inline double riccati_residual(const RiccatiGrid& rg, const SystemMatrices& m) {
  const std::size_t n = rg.grid.n_steps();
  if (rg.P.size() != n + 1 || n < 2)
    throw SolverError(ErrorKind::InvalidInput, "residual needs at least 3 nodes");
  const double inv2dt = 1.0 / (2.0 * rg.grid.dt());
  double worst = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    const Mat3& P = rg.P[k];
    const Mat3 dP = (rg.P[k + 1] - rg.P[k - 1]) * inv2dt;
    const Mat3 r = dP + P * m.A + P * m.B * P - m.A_hat - m.B_hat * P;
    const double v = r.cwiseAbs().maxCoeff();
    if (!(v <= worst)) worst = v;  // NaN propagates
  }
  return worst;
}

/// Nodewise residual profile (interior nodes; endpoints reported as 0).
inline std::vector<double> riccati_residual_profile(const RiccatiGrid& rg,
                                                    const SystemMatrices& m) {
  const std::size_t n = rg.grid.n_steps();
  std::vector<double> out(n + 1, 0.0);
  const double inv2dt = 1.0 / (2.0 * rg.grid.dt());
  for (std::size_t k = 1; k < n; ++k) {
    const Mat3& P = rg.P[k];
    const Mat3 dP = (rg.P[k + 1] - rg.P[k - 1]) * inv2dt;
    out[k] = (dP + P * m.A + P * m.B * P - m.A_hat - m.B_hat * P).cwiseAbs().maxCoeff();
  }
  return out;
}

/// Backward RK4 integration of the Riccati flow from P(T) = G.
inline RiccatiGrid solve_riccati_direct(const SystemMatrices& m, const TimeGrid& grid,
                                        const RiccatiOptions& opts = {}) {
  const std::size_t n = grid.n_steps();
  const double dt = grid.dt();
  const detail::StiffnessBound stiff(m);
  const auto rhs = [&m](double, const Mat3& P) { return riccati_rhs(m, P); };

  RiccatiGrid out;
  out.grid = grid;
  out.method = RiccatiMethod::direct;
  out.P.resize(n + 1);
  out.P[n] = m.G;

  for (std::size_t k = n; k-- > 0;) {
    const std::size_t sub = detail::substeps_for(dt, stiff.at(out.P[k + 1]), opts);
    const double h = -dt / static_cast<double>(sub);
    Mat3 P = out.P[k + 1];
    double t = grid.node(k + 1);
    for (std::size_t j = 0; j < sub; ++j) {
      P = rk4_step(P, t, h, rhs);
      t += h;
      if (detail::exceeds(P, opts.blowup_cap))
        throw SolverError(ErrorKind::BlowUp,
                          "Riccati solution escapes near t = " + std::to_string(t), t);
    }
    out.P[k] = P;
  }
  if (n >= 2) out.max_residual = riccati_residual(out, m);
  return out;
}

inline double reciprocal_condition(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R);
  const auto& s = svd.singularValues();
  if (!(s(0) > 0.0)) return 0.0;
  return s(2) / s(0);
}

struct LinearizedSolution {
  RiccatiGrid riccati;
  LinearizationPair pair;
};

/// Integrates d/dt (R; T) = [[A, B], [Â, B̂]] (R; T) backward from (I; G) and
/// forms P = T R^{-1} at every node.
inline LinearizedSolution solve_riccati_linearized(const SystemMatrices& m,
                                                   const TimeGrid& grid,
                                                   const RiccatiOptions& opts = {}) {
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Mat63 = Eigen::Matrix<double, 6, 3>;
  Mat6 H;
  H << m.A, m.B, m.A_hat, m.B_hat;
  const double normH = Eigen::JacobiSVD<Mat6>(H).singularValues()(0);

  const std::size_t n = grid.n_steps();
  const double dt = grid.dt();
  const std::size_t sub = detail::substeps_for(dt, normH, opts);
  const double h = -dt / static_cast<double>(sub);
  const auto rhs = [&H](double, const Mat63& W) -> Mat63 { return H * W; };

  LinearizedSolution out;
  auto& rg = out.riccati;
  auto& lp = out.pair;
  rg.grid = grid;
  rg.method = RiccatiMethod::linearized;
  rg.P.resize(n + 1);
  lp.R.resize(n + 1);
  lp.Tmat.resize(n + 1);

  Mat63 W;
  W << Mat3::Identity(), m.G;
  lp.R[n] = Mat3::Identity();
  lp.Tmat[n] = m.G;
  rg.P[n] = m.G;
  lp.min_condition_R = 1.0;

  for (std::size_t k = n; k-- > 0;) {
    double t = grid.node(k + 1);
    for (std::size_t j = 0; j < sub; ++j) {
      W = rk4_step(W, t, h, rhs);
      t += h;
    }
    const Mat3 R = W.topRows<3>();
    const Mat3 Tm = W.bottomRows<3>();
    const double tk = grid.node(k);
    if (!W.allFinite())
      throw SolverError(ErrorKind::SingularR,
                        "linearization overflow at t = " + std::to_string(tk), tk);
    const double rc = reciprocal_condition(R);
    lp.min_condition_R = std::min(lp.min_condition_R, rc);
    if (rc < opts.rcond_floor)
      throw SolverError(ErrorKind::SingularR,
                        "R is numerically singular at t = " + std::to_string(tk), tk);
    lp.R[k] = R;
    lp.Tmat[k] = Tm;
    // P = T R^{-1}  <=>  Rᵀ Pᵀ = Tᵀ
    rg.P[k] = R.transpose().fullPivLu().solve(Tm.transpose()).transpose();
    if (detail::exceeds(rg.P[k], opts.blowup_cap))
      throw SolverError(ErrorKind::BlowUp,
                        "Riccati solution escapes near t = " + std::to_string(tk), tk);
  }
  if (n >= 2) rg.max_residual = riccati_residual(rg, m);
  return out;
}

/// Sufficient conditions for global existence when p = rB = 0:
/// C + D G + Gᵀ Dᵀ > 0 and L + Lᵀ <= 0 with the fixed C = diag(0,0,1),
/// D = diag(-1,-1,0).
inline ConditionReport verify_freiling_conditions(const SystemMatrices& m) {
  ConditionReport r;
  Mat3 C = Mat3::Zero();
  C(2, 2) = 1.0;
  Mat3 D = Mat3::Zero();
  D(0, 0) = -1.0;
  D(1, 1) = -1.0;

  r.cdg_matrix = C + D * m.G + m.G.transpose() * D.transpose();
  // Sylvester: all leading principal minors strictly positive
  const Mat3& S = r.cdg_matrix;
  const double m1 = S(0, 0);
  const double m2 = S(0, 0) * S(1, 1) - S(0, 1) * S(1, 0);
  const double m3 = S.determinant();
  r.cdg_positive_definite = m1 > 0.0 && m2 > 0.0 && m3 > 0.0;

  r.L.topLeftCorner<3, 3>() = C * m.A + D * m.A_hat;
  r.L.topRightCorner<3, 3>() = C * m.B + m.A.transpose() * D + D * m.B_hat;
  r.L.bottomLeftCorner<3, 3>().setZero();
  r.L.bottomRightCorner<3, 3>() = m.B.transpose() * D;
  const Eigen::Matrix<double, 6, 6> sym = r.L + r.L.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(sym);
  r.L_sym_eigenvalues = eig.eigenvalues();
  r.L_sym_negative_semidefinite = r.L_sym_eigenvalues.maxCoeff() <= 1e-10;
  return r;
}

enum class SolverChoice { automatic, direct, linearized };

struct RiccatiSolution {
  RiccatiGrid riccati;
  std::optional<LinearizationPair> pair;
  /// Set when the linearized route failed and the direct one was used.
  std::optional<std::string> fallback_reason;
};

/// Linearized route in the p = rB = 0 regime (falling back to direct if R
/// turns singular), direct route otherwise.
inline RiccatiSolution solve_riccati(const SystemMatrices& m, const ModelParams& prm,
                                     const TimeGrid& grid,
                                     SolverChoice choice = SolverChoice::automatic,
                                     const RiccatiOptions& opts = {}) {
  RiccatiSolution out;
  const bool proven = prm.decay_p == 0.0 && prm.rB == 0.0;
  if (choice == SolverChoice::direct ||
      (choice == SolverChoice::automatic && !proven)) {
    out.riccati = solve_riccati_direct(m, grid, opts);
    return out;
  }
  try {
    auto lin = solve_riccati_linearized(m, grid, opts);
    out.riccati = std::move(lin.riccati);
    out.pair = std::move(lin.pair);
  } catch (const SolverError& e) {
    if (choice == SolverChoice::linearized || e.kind() != ErrorKind::SingularR) throw;
    out.riccati = solve_riccati_direct(m, grid, opts);
    out.fallback_reason = e.what();
  }
  return out;
}

}  // namespace broker_nash
