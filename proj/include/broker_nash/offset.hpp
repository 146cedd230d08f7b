#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "broker_nash/errors.hpp"
#include "broker_nash/model.hpp"
#include "broker_nash/riccati.hpp"
#include "broker_nash/time_grid.hpp"

namespace broker_nash {

// The affine part of the feedback, l_t, solves the linear BSDE
//   dl = (a_t + Λ_t l) dt + σ_t dM,  l_T = 0,
// with Λ_t = B̂ - P_t B and a_t = b̂_t - P_t b_t. For OU drivers it is linear
// in the current signal and flow: l_t = c1(t) alpha_t + c2(t) xi_t, where
//   c1' = kappa_alpha c1 + Λ c1 + coef_alpha,
//   c2' = kappa_xi c2 + Λ c2 + coef_xi(t),
// coef_alpha = (-1/(2a), -1/(2b), 0) and coef_xi = -h/(2a) e1 + P_t e1.
// Row-wise: c1 = (g1, h1, f1), c2 = (g2, h2, f2).

struct OffsetGrid {
  TimeGrid grid;
  std::vector<double> g1, g2, h1, h2, f1, f2;

  Vec3 alpha_coefficients(std::size_t k) const { return Vec3(g1[k], h1[k], f1[k]); }
  Vec3 xi_coefficients(std::size_t k) const { return Vec3(g2[k], h2[k], f2[k]); }

  /// l_t at node k for the given signal and uninformed flow.
  Vec3 ell(std::size_t k, double alpha, double xi) const {
    return Vec3(g1[k] * alpha + g2[k] * xi, h1[k] * alpha + h2[k] * xi,
                f1[k] * alpha + f2[k] * xi);
  }
};

inline Mat3 offset_lambda(const SystemMatrices& m, const Mat3& P) {
  return m.B_hat - P * m.B;
}

inline Vec3 offset_xi_loading(const SystemMatrices& m, const Mat3& P) {
  return Vec3(-m.impact_h / (2.0 * m.a), 0.0, 0.0) + P.col(0);
}

namespace detail {

using OffsetState = Eigen::Matrix<double, 15, 1>;

inline Mat3 unpack_matrix(const OffsetState& y) {
  return Eigen::Map<const Mat3>(y.data());
}

}  // namespace detail

/// Backward integration of the coefficient ODEs with a configurable alpha
/// loading (the model's is SystemMatrices::alpha_loading()). On each grid
/// interval the Riccati flow is re-integrated from the stored P at the right
/// node so the RK4 stages see P at the intermediate times.
inline OffsetGrid integrate_offset_coefficients(const RiccatiGrid& rg, const SystemMatrices& m,
                                                double kappa_alpha, double kappa_xi,
                                                const Vec3& alpha_loading,
                                                const RiccatiOptions& opts = {}) {
  using detail::OffsetState;
  const TimeGrid& grid = rg.grid;
  const std::size_t n = grid.n_steps();
  const double dt = grid.dt();
  const detail::StiffnessBound stiff(m);

  OffsetGrid out;
  out.grid = grid;
  for (auto* v : {&out.g1, &out.g2, &out.h1, &out.h2, &out.f1, &out.f2})
    v->assign(n + 1, 0.0);

  const auto rhs = [&](double, const OffsetState& y) -> OffsetState {
    const Mat3 P = detail::unpack_matrix(y);
    const Vec3 c1 = y.segment<3>(9);
    const Vec3 c2 = y.segment<3>(12);
    const Mat3 lambda = offset_lambda(m, P);
    OffsetState d;
    Eigen::Map<Mat3>(d.data()) = riccati_rhs(m, P);
    d.segment<3>(9) = kappa_alpha * c1 + lambda * c1 + alpha_loading;
    d.segment<3>(12) = kappa_xi * c2 + lambda * c2 + offset_xi_loading(m, P);
    return d;
  };

  Vec3 c1 = Vec3::Zero(), c2 = Vec3::Zero();
  for (std::size_t k = n; k-- > 0;) {
    const std::size_t sub = detail::substeps_for(dt, stiff.at(rg.P[k + 1]), opts);
    const double h = -dt / static_cast<double>(sub);
    OffsetState y;
    Eigen::Map<Mat3>(y.data()) = rg.P[k + 1];
    y.segment<3>(9) = c1;
    y.segment<3>(12) = c2;
    double t = grid.node(k + 1);
    for (std::size_t j = 0; j < sub; ++j) {
      y = rk4_step(y, t, h, rhs);
      t += h;
    }
    c1 = y.segment<3>(9);
    c2 = y.segment<3>(12);
    out.g1[k] = c1(0);
    out.h1[k] = c1(1);
    out.f1[k] = c1(2);
    out.g2[k] = c2(0);
    out.h2[k] = c2(1);
    out.f2[k] = c2(2);
  }
  return out;
}

inline OffsetGrid solve_offset_odes(const RiccatiGrid& rg, const ModelParams& prm,
                                    const TimeGrid& grid, const RiccatiOptions& opts = {}) {
  if (!(rg.grid == grid) || rg.P.size() != grid.n_nodes())
    throw SolverError(ErrorKind::GridMismatch, "Riccati grid differs from the offset grid");
  if (!std::isfinite(prm.kappa_alpha) || !std::isfinite(prm.kappa_xi))
    throw SolverError(ErrorKind::InvalidInput, "OU mean-reversion rates must be finite");
  const SystemMatrices m = assemble_matrices(prm);
  return integrate_offset_coefficients(rg, m, prm.kappa_alpha, prm.kappa_xi,
                                       m.alpha_loading(), opts);
}

inline OffsetGrid solve_offset_odes(const RiccatiGrid& rg, const ModelParams& prm,
                                    const RiccatiOptions& opts = {}) {
  return solve_offset_odes(rg, prm, rg.grid, opts);
}

/// zeta solves d zeta = -zeta Λ_t dt, zeta_0 = I; with it
///   l_t = -E[ ∫_t^T zeta_t^{-1} zeta_u a_u du | F_t ].
struct FundamentalSolution {
  TimeGrid grid;
  std::vector<Mat3> zeta;
  std::vector<Mat3> Lambda;
  Vec3 coef_alpha = Vec3::Zero();
  std::vector<Vec3> coef_xi;
};

inline FundamentalSolution build_fundamental_solution(const RiccatiGrid& rg,
                                                      const SystemMatrices& m,
                                                      const RiccatiOptions& opts = {}) {
  using State = Eigen::Matrix<double, 18, 1>;
  const TimeGrid& grid = rg.grid;
  const std::size_t n = grid.n_steps();
  const double dt = grid.dt();
  const detail::StiffnessBound stiff(m);

  FundamentalSolution fs;
  fs.grid = grid;
  fs.coef_alpha = m.alpha_loading();
  fs.zeta.resize(n + 1);
  fs.Lambda.resize(n + 1);
  fs.coef_xi.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    fs.Lambda[k] = offset_lambda(m, rg.P[k]);
    fs.coef_xi[k] = offset_xi_loading(m, rg.P[k]);
  }

  const auto rhs = [&](double, const State& y) -> State {
    const Mat3 P = Eigen::Map<const Mat3>(y.data());
    const Mat3 Z = Eigen::Map<const Mat3>(y.data() + 9);
    State d;
    Eigen::Map<Mat3>(d.data()) = riccati_rhs(m, P);
    Eigen::Map<Mat3>(d.data() + 9) = -Z * offset_lambda(m, P);
    return d;
  };

  fs.zeta[0] = Mat3::Identity();
  for (std::size_t k = 0; k < n; ++k) {
    const double s = std::max(stiff.at(rg.P[k]), stiff.at(rg.P[k + 1]));
    const std::size_t sub = detail::substeps_for(dt, s, opts);
    const double h = dt / static_cast<double>(sub);
    State y;
    Eigen::Map<Mat3>(y.data()) = rg.P[k];
    Eigen::Map<Mat3>(y.data() + 9) = fs.zeta[k];
    double t = grid.node(k);
    for (std::size_t j = 0; j < sub; ++j) {
      y = rk4_step(y, t, h, rhs);
      t += h;
    }
    fs.zeta[k + 1] = Eigen::Map<const Mat3>(y.data() + 9);
  }
  return fs;
}

namespace detail {

/// Composite quadrature weights (in units of dt) for m intervals: Simpson,
/// with a 3/8 panel at the end when m is odd, trapezoid when m == 1.
inline std::vector<double> simpson_weights(std::size_t m) {
  std::vector<double> w(m + 1, 0.0);
  if (m == 0) return w;
  if (m == 1) {
    w[0] = w[1] = 0.5;
    return w;
  }
  const std::size_t simpson = (m % 2 == 0) ? m : m - 3;
  for (std::size_t j = 0; j + 2 <= simpson; j += 2) {
    w[j] += 1.0 / 3.0;
    w[j + 1] += 4.0 / 3.0;
    w[j + 2] += 1.0 / 3.0;
  }
  if (simpson != m) {
    const std::size_t j = simpson;
    w[j] += 3.0 / 8.0;
    w[j + 1] += 9.0 / 8.0;
    w[j + 2] += 9.0 / 8.0;
    w[j + 3] += 3.0 / 8.0;
  }
  return w;
}

}  // namespace detail

/// l_t from the conditional-expectation representation, using the OU means
/// E[alpha_u | F_t] = alpha_t e^{-kappa_alpha (u-t)} (same for xi) and
/// composite Simpson quadrature over the grid nodes in [t, T].
inline Vec3 ell_quadrature(const FundamentalSolution& fs, double t, double alpha_t,
                           double xi_t, const ModelParams& prm) {
  const auto idx = fs.grid.index_of(t);
  if (!idx) throw SolverError(ErrorKind::NotOnGrid, "t is not a grid node", t);
  const std::size_t k = *idx;
  const std::size_t n = fs.grid.n_steps();
  const double dt = fs.grid.dt();
  const auto w = detail::simpson_weights(n - k);

  Vec3 acc = Vec3::Zero();
  const double tk = fs.grid.node(k);
  for (std::size_t j = k; j <= n; ++j) {
    const double lag = fs.grid.node(j) - tk;
    const Vec3 a = fs.coef_alpha * (alpha_t * std::exp(-prm.kappa_alpha * lag)) +
                   fs.coef_xi[j] * (xi_t * std::exp(-prm.kappa_xi * lag));
    acc += (w[j - k] * dt) * (fs.zeta[j] * a);
  }
  return -fs.zeta[k].fullPivLu().solve(acc);
}

}  // namespace broker_nash
