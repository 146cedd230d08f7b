#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "broker_nash/errors.hpp"
#include "broker_nash/params.hpp"

namespace broker_nash {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Constant coefficients of the linear FBSDE
///   dX = (A X + B Y + b_t) dt,   dY = (Â X + B̂ Y + b̂_t) dt + dM,   Y_T = G X_T
/// with X = (Q^B, Q^I, Y) and Y = (nu, eta, Z).
///
/// The martingale loading sigma_t (it carries e^{p t}) only matters for the
/// martingale representation, never for the feedback strategies, so it is not
/// built here.
struct SystemMatrices {
  Mat3 A = Mat3::Zero();
  Mat3 B = Mat3::Zero();
  Mat3 A_hat = Mat3::Zero();
  Mat3 B_hat = Mat3::Zero();
  Mat3 G = Mat3::Zero();

  // coefficients needed by the affine drivers
  double a = 1.0;
  double b = 1.0;
  double impact_h = 0.0;

  /// b_t = (-xi, 0, 0)
  Vec3 driver_b(double xi) const { return Vec3(-xi, 0.0, 0.0); }

  /// b̂_t = (-(alpha + h xi)/(2a), -alpha/(2b), 0)
  Vec3 driver_b_hat(double alpha, double xi) const {
    return Vec3(-(alpha + impact_h * xi) / (2.0 * a), -alpha / (2.0 * b), 0.0);
  }

  /// Loading of alpha in b̂_t.
  Vec3 alpha_loading() const {
    return Vec3(-1.0 / (2.0 * a), -1.0 / (2.0 * b), 0.0);
  }
};

inline SystemMatrices assemble_matrices(const ModelParams& prm) {
  const auto report = validate_params(prm);
  if (const auto* f = report.first_failure())
    throw SolverError(ErrorKind::InvalidInput, f->message);

  const double a = prm.a, b = prm.b, h = prm.impact_h, p = prm.decay_p;
  SystemMatrices m;
  m.a = a;
  m.b = b;
  m.impact_h = h;

  m.A(2, 2) = -p;

  m.B << 1.0, -1.0, 0.0,
         0.0, 1.0, 0.0,
         h, 0.0, 0.0;

  m.A_hat << (2.0 * prm.rB + p * h) / (2.0 * a), 0.0, p / (2.0 * a),
             0.0, prm.rI / b, p / (2.0 * b),
             -1.0, 0.0, 0.0;

  m.B_hat << 0.0, -h / (2.0 * a), -p * p * h / (2.0 * a),
             -h / (2.0 * b), 0.0, 0.0,
             0.0, 0.0, p;

  m.G(0, 0) = -prm.varphi() / a;
  m.G(1, 1) = -prm.psi / b;
  return m;
}

/// Largest eigenvalue of a symmetric 3x3 matrix from the trigonometric
/// solution of its characteristic cubic.
inline double largest_symmetric_eigenvalue(const Mat3& S) {
  const double p1 = S(0, 1) * S(0, 1) + S(0, 2) * S(0, 2) + S(1, 2) * S(1, 2);
  const double q = S.trace() / 3.0;
  const double d0 = S(0, 0) - q, d1 = S(1, 1) - q, d2 = S(2, 2) - q;
  const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
  if (p2 <= 0.0) return q;
  const double p = std::sqrt(p2 / 6.0);
  const Mat3 Bm = (S - q * Mat3::Identity()) / p;
  const double r = std::clamp(Bm.determinant() / 2.0, -1.0, 1.0);
  const double angle = std::acos(r) / 3.0;
  return q + 2.0 * p * std::cos(angle);
}

/// Operator 2-norm: sqrt of the largest eigenvalue of MᵀM.
inline double spectral_norm(const Mat3& M) {
  if (!M.allFinite())
    throw SolverError(ErrorKind::InvalidInput, "spectral_norm of non-finite matrix");
  const double scale = M.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  // scaling keeps MᵀM away from overflow/underflow
  const Mat3 Ms = M / scale;
  const double lambda = largest_symmetric_eigenvalue(Ms.transpose() * Ms);
  return scale * std::sqrt(std::max(lambda, 0.0));
}

struct BoundReport {
  double norm_A = 0.0;
  double norm_B = 0.0;
  double norm_A_hat = 0.0;
  double norm_B_hat = 0.0;
  double norm_G = 0.0;
  double lhs_max = 0.0;
  bool satisfied = false;
  /// Largest admissible horizon when |G| = 0.
  std::optional<double> t_star;
};

/// Small-horizon contraction condition
///   max{12|G|² + T²(2|A|² + 30|Â|²), T²(2|B|² + 30|B̂|²)} < 1.
inline BoundReport existence_bound(const SystemMatrices& m, double horizon_T) {
  BoundReport r;
  r.norm_A = spectral_norm(m.A);
  r.norm_B = spectral_norm(m.B);
  r.norm_A_hat = spectral_norm(m.A_hat);
  r.norm_B_hat = spectral_norm(m.B_hat);
  r.norm_G = spectral_norm(m.G);

  const double cx = 2.0 * r.norm_A * r.norm_A + 30.0 * r.norm_A_hat * r.norm_A_hat;
  const double cy = 2.0 * r.norm_B * r.norm_B + 30.0 * r.norm_B_hat * r.norm_B_hat;
  const double T2 = horizon_T * horizon_T;
  r.lhs_max = std::max(12.0 * r.norm_G * r.norm_G + T2 * cx, T2 * cy);
  r.satisfied = r.lhs_max < 1.0;
  if (r.norm_G == 0.0) {
    const double c = std::max(cx, cy);
    r.t_star = c > 0.0 ? 1.0 / std::sqrt(c) : std::numeric_limits<double>::infinity();
  }
  return r;
}

inline BoundReport existence_bound(const ModelParams& prm) {
  return existence_bound(assemble_matrices(prm), prm.horizon_T);
}

}  // namespace broker_nash
