#include <gtest/gtest.h>

#include <array>
#include <random>

#include "broker_nash/offset.hpp"

using namespace broker_nash;

namespace {

struct Defaults {
  ModelParams prm;
  SystemMatrices m = assemble_matrices(prm);
  TimeGrid grid{1.0, 10000};
  RiccatiGrid rg = solve_riccati_direct(m, grid);
  OffsetGrid og = solve_offset_odes(rg, prm);
  FundamentalSolution fs = build_fundamental_solution(rg, m);
};

const Defaults& defaults() {
  static const Defaults s;
  return s;
}

using Six = std::array<double, 6>;  // (g1, g2, h1, h2, f1, f2)

/// The six coefficient ODEs exactly as printed (decay p = 0), solved for d/dt.
Six printed_rhs(const ModelParams& q, const Mat3& P, const Six& c) {
  const double a = q.a, b = q.b, h = q.impact_h, ka = q.kappa_alpha, kx = q.kappa_xi;
  const double gB = P(0, 0), gI = P(0, 1), gY = P(0, 2);
  const double hB = P(1, 0), hI = P(1, 1), hY = P(1, 2);
  const double fB = P(2, 0), fI = P(2, 1), fY = P(2, 2);
  const auto [g1, g2, h1, h2, f1, f2] = c;
  Six d;
  d[0] = -(gB * (g1 - h1) + gI * h1 + g1 * gY * h - g1 * ka + 1 / (2 * a) + h1 * h / (2 * a));
  d[1] = -(-gB + gB * (g2 - h2) + gI * h2 + g2 * gY * h - g2 * kx + h / (2 * a) + h2 * h / (2 * a));
  d[2] = -(hB * (g1 - h1) + h1 * hI + g1 * hY * h - h1 * ka + 1 / (2 * b) + g1 * h / (2 * b));
  d[3] = -(-hB + hB * (g2 - h2) + h2 * hI + g2 * hY * h - h2 * kx + g2 * h / (2 * b));
  d[4] = -(fB * (g1 - h1) + fI * h1 + fY * g1 * h - f1 * ka);
  d[5] = -(-fB + fB * (g2 - h2) + fI * h2 + fY * g2 * h - f2 * kx);
  return d;
}

Six general_rhs(const ModelParams& q, const SystemMatrices& m, const Mat3& P, const Six& c) {
  const Vec3 c1(c[0], c[2], c[4]), c2(c[1], c[3], c[5]);
  const Mat3 L = offset_lambda(m, P);
  const Vec3 d1 = q.kappa_alpha * c1 + L * c1 + m.alpha_loading();
  const Vec3 d2 = q.kappa_xi * c2 + L * c2 + offset_xi_loading(m, P);
  return {d1(0), d2(0), d1(1), d2(1), d1(2), d2(2)};
}

}  // namespace

TEST(OffsetOdes, GeneralFormReducesToPrintedSystemWithoutDecay) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0), pos(0.1, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    ModelParams q;
    q.a = pos(rng), q.b = pos(rng), q.impact_h = pos(rng), q.phi = q.impact_h;
    q.kappa_alpha = pos(rng), q.kappa_xi = pos(rng);
    const auto m = assemble_matrices(q);
    Mat3 P;
    for (int i = 0; i < 9; ++i) P.data()[i] = u(rng);
    Six c;
    for (auto& x : c) x = u(rng);
    const Six want = printed_rhs(q, P, c), got = general_rhs(q, m, P, c);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(got[i], want[i], 1e-12 * (1 + std::abs(want[i])));
  }
}

TEST(OffsetOdes, TerminalCoefficientsExactlyZero) {
  const auto& og = defaults().og;
  const std::size_t n = og.grid.n_steps();
  EXPECT_EQ(og.g1[n], 0.0);
  EXPECT_EQ(og.g2[n], 0.0);
  EXPECT_EQ(og.h1[n], 0.0);
  EXPECT_EQ(og.h2[n], 0.0);
  EXPECT_EQ(og.f1[n], 0.0);
  EXPECT_EQ(og.f2[n], 0.0);
}

TEST(OffsetOdes, ZeroAlphaLoadingGivesZeroAlphaCoefficients) {
  const auto& s = defaults();
  const auto og = integrate_offset_coefficients(s.rg, s.m, s.prm.kappa_alpha, s.prm.kappa_xi,
                                                Vec3::Zero());
  for (std::size_t k = 0; k < og.g1.size(); ++k) {
    EXPECT_EQ(og.g1[k], 0.0);
    EXPECT_EQ(og.h1[k], 0.0);
    EXPECT_EQ(og.f1[k], 0.0);
  }
}

TEST(OffsetOdes, GridMismatchIsRejected) {
  const auto& s = defaults();
  try {
    solve_offset_odes(s.rg, s.prm, TimeGrid(1.0, 5000));
    FAIL() << "expected GridMismatch";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
  }
}

TEST(OffsetOdes, IndependentOfSignalVolatilities) {
  ModelParams q;
  q.sigma_alpha = 7.0, q.sigma_xi = 0.0;
  const auto& s = defaults();
  const auto og = solve_offset_odes(s.rg, q);
  EXPECT_EQ(og.g1, s.og.g1);
  EXPECT_EQ(og.g2, s.og.g2);
  EXPECT_EQ(og.h2, s.og.h2);
}

TEST(OffsetOdes, NoDecayThirdRowIsInertButComputed) {
  const auto& og = defaults().og;
  for (std::size_t k = 0; k < og.f1.size(); ++k) {
    EXPECT_TRUE(std::isfinite(og.f1[k]));
    EXPECT_TRUE(std::isfinite(og.f2[k]));
  }
}

TEST(FundamentalSolution, IdentityWhenLambdaVanishes) {
  SystemMatrices z = assemble_matrices(ModelParams{});
  z.B_hat.setZero();
  z.A_hat.setZero();
  z.G.setZero();
  const auto rg = solve_riccati_direct(z, TimeGrid(1.0, 200));
  const auto fs = build_fundamental_solution(rg, z);
  for (const auto& Z : fs.zeta) EXPECT_EQ(Z, Mat3::Identity());
}

TEST(FundamentalSolution, DeterminantFollowsTraceFormula) {
  const auto& s = defaults();
  const auto& fs = s.fs;
  EXPECT_EQ(fs.zeta[0], Mat3::Identity());
  // d(det zeta)/dt = -tr(Λ) det zeta  =>  log det zeta_t = -∫ tr Λ (trapezoid, refined)
  double integral = 0.0;
  const double dt = fs.grid.dt();
  for (std::size_t k = 0; k + 1 < fs.zeta.size(); ++k) {
    integral += 0.5 * dt * (fs.Lambda[k].trace() + fs.Lambda[k + 1].trace());
    const double det = fs.zeta[k + 1].determinant();
    ASSERT_GT(det, 0.0);
    if ((k + 1) % 500 == 0) {
      EXPECT_NEAR(std::log(det), -integral, 1e-4 * (1 + std::abs(integral))) << k;
    }
  }
}

TEST(FundamentalSolution, DoubledGridAgreesAtSharedNodes) {
  const auto& s = defaults();
  const TimeGrid fine(1.0, 20000);
  const auto rg2 = solve_riccati_direct(s.m, fine);
  const auto fs2 = build_fundamental_solution(rg2, s.m);
  double gap = 0.0;
  for (std::size_t k = 0; k < s.fs.zeta.size(); ++k)
    gap = std::max(gap, (s.fs.zeta[k] - fs2.zeta[2 * k]).cwiseAbs().maxCoeff());
  EXPECT_LE(gap, 1e-8);
}

TEST(EllQuadrature, ZeroStateGivesZero) {
  const auto& s = defaults();
  EXPECT_TRUE(ell_quadrature(s.fs, 0.3, 0.0, 0.0, s.prm).isZero(0.0));
}

TEST(EllQuadrature, TerminalTimeGivesZero) {
  const auto& s = defaults();
  EXPECT_TRUE(ell_quadrature(s.fs, 1.0, 3.0, -2.0, s.prm).isZero(0.0));
}

TEST(EllQuadrature, OffGridTimeRejected) {
  const auto& s = defaults();
  try {
    ell_quadrature(s.fs, 0.12345678, 1.0, 0.0, s.prm);
    FAIL() << "expected NotOnGrid";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotOnGrid);
  }
}

TEST(EllQuadrature, LinearInConditioningState) {
  const auto& s = defaults();
  for (double t : {0.0, 0.25, 0.9, 0.999}) {
    const Vec3 lhs = ell_quadrature(s.fs, t, 2.0, 3.0, s.prm);
    const Vec3 rhs = 2.0 * ell_quadrature(s.fs, t, 1.0, 0.0, s.prm) +
                     3.0 * ell_quadrature(s.fs, t, 0.0, 1.0, s.prm);
    EXPECT_LE((lhs - rhs).norm(), 1e-12 * (1 + rhs.norm())) << t;
  }
}

TEST(EllQuadrature, MidHorizonMatchesOdeCoefficients) {
  const auto& s = defaults();
  const Vec3 q = ell_quadrature(s.fs, 0.5, 1.0, 0.0, s.prm);
  const Vec3 ode = s.og.alpha_coefficients(5000);
  EXPECT_LE((q - ode).cwiseAbs().maxCoeff(), 1e-5) << q.transpose() << " vs " << ode.transpose();
}

TEST(EllQuadrature, AgreesWithOdeAtRandomTriples) {
  const auto& s = defaults();
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> node(0, s.grid.n_steps());
  std::normal_distribution<double> n01;
  for (int i = 0; i < 20; ++i) {
    const std::size_t k = node(rng);
    const double alpha = n01(rng), xi = 100.0 * n01(rng);
    const Vec3 q = ell_quadrature(s.fs, s.grid.node(k), alpha, xi, s.prm);
    const Vec3 ode = s.og.ell(k, alpha, xi);
    EXPECT_LE((q - ode).norm(), 1e-5 * (1 + ode.norm())) << "node " << k;
  }
}

TEST(EllQuadrature, AgreesWithOdeOnEveryNode) {
  const auto& s = defaults();
  double worst = 0.0;
  for (std::size_t k = 0; k <= s.grid.n_steps(); k += 7) {
    for (const auto& [alpha, xi] : {std::pair{1.0, 0.0}, std::pair{0.0, 1.0}}) {
      const Vec3 q = ell_quadrature(s.fs, s.grid.node(k), alpha, xi, s.prm);
      const Vec3 ode = s.og.ell(k, alpha, xi);
      worst = std::max(worst, (q - ode).norm() / (1 + ode.norm()));
    }
  }
  EXPECT_LE(worst, 1e-5);
}
