#include <gtest/gtest.h>

#include <random>

#include "broker_nash/riccati.hpp"

using namespace broker_nash;

namespace {

ModelParams zero_terminal_params() {
  ModelParams p;
  p.phi = p.impact_h / 2.0;
  p.psi = 0.0;
  return p;
}

double max_entry_gap(const RiccatiGrid& x, const RiccatiGrid& y) {
  double gap = 0.0;
  for (std::size_t k = 0; k < x.P.size(); ++k)
    gap = std::max(gap, (x.P[k] - y.P[k]).cwiseAbs().maxCoeff());
  return gap;
}

/// P_0 from a 10^6-step integration, Richardson-refined against 5·10^5 steps.
const Mat3& fine_oracle_P0() {
  static const Mat3 P0 = [] {
    const auto m = assemble_matrices(ModelParams{});
    RiccatiOptions one;
    one.substeps = 1;
    const Mat3 fine = solve_riccati_direct(m, TimeGrid(1.0, 1000000), one).P[0];
    const Mat3 half = solve_riccati_direct(m, TimeGrid(1.0, 500000), one).P[0];
    return Mat3(fine + (fine - half) / 15.0);
  }();
  return P0;
}

}  // namespace

TEST(RiccatiDirect, ZeroDataGivesZeroSolution) {
  const auto m = assemble_matrices(zero_terminal_params());
  // Â has the -1 entry in row 3; kill it to get Â = 0.
  SystemMatrices z = m;
  z.A_hat.setZero();
  const auto rg = solve_riccati_direct(z, TimeGrid(1.0, 200));
  for (const auto& P : rg.P) EXPECT_TRUE(P.isZero(0.0));
  EXPECT_EQ(rg.max_residual, 0.0);
  EXPECT_EQ(riccati_residual(rg, z), 0.0);
}

TEST(RiccatiDirect, TerminalValueIsExactlyG) {
  const auto m = assemble_matrices(ModelParams{});
  const auto rg = solve_riccati_direct(m, TimeGrid(1.0, 1000));
  EXPECT_EQ(rg.P.back(), m.G);
  EXPECT_EQ(rg.method, RiccatiMethod::direct);
}

TEST(RiccatiDirect, NoDecayThirdColumnVanishes) {
  const auto m = assemble_matrices(ModelParams{});
  const auto rg = solve_riccati_direct(m, TimeGrid(1.0, 10000));
  for (std::size_t k = 0; k < rg.P.size(); ++k) EXPECT_LE(rg.P[k].col(2).norm(), 1e-10);
}

TEST(RiccatiDirect, MatchesFineGridOracle) {
  const auto m = assemble_matrices(ModelParams{});
  const auto rg = solve_riccati_direct(m, TimeGrid(1.0, 10000));
  EXPECT_LE((rg.P[0] - fine_oracle_P0()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RiccatiDirect, FourthOrderConvergence) {
  const auto m = assemble_matrices(ModelParams{});
  RiccatiOptions one;
  one.substeps = 1;  // plain RK4, so the step-halving ratio measures the scheme
  const Mat3 coarse = solve_riccati_direct(m, TimeGrid(1.0, 2000), one).P[0];
  const Mat3 fine = solve_riccati_direct(m, TimeGrid(1.0, 4000), one).P[0];
  const double e1 = (coarse - fine_oracle_P0()).cwiseAbs().maxCoeff();
  const double e2 = (fine - fine_oracle_P0()).cwiseAbs().maxCoeff();
  EXPECT_GE(e1 / e2, 8.0) << e1 << " " << e2;
}

TEST(RiccatiDirect, CoarseGridStaysStableWithSubsteps) {
  const auto m = assemble_matrices(ModelParams{});
  const auto rg = solve_riccati_direct(m, TimeGrid(1.0, 100));
  EXPECT_LE((rg.P[0] - fine_oracle_P0()).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(RiccatiDirect, EscapeIsReportedAsBlowUp) {
  ModelParams p;
  p.impact_h = 10.0;  // varphi = -4: the flow escapes just before T
  try {
    solve_riccati_direct(assemble_matrices(p), TimeGrid(1.0, 2000));
    FAIL() << "expected BlowUp";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BlowUp);
    EXPECT_GT(e.where(), 0.99);
    EXPECT_LT(e.where(), 1.0);
  }
}

TEST(RiccatiLinearized, ZeroDataGivesZeroSolution) {
  SystemMatrices z = assemble_matrices(zero_terminal_params());
  z.A_hat.setZero();
  const auto sol = solve_riccati_linearized(z, TimeGrid(1.0, 200));
  for (std::size_t k = 0; k < sol.riccati.P.size(); ++k) {
    EXPECT_TRUE(sol.pair.Tmat[k].isZero(0.0));
    EXPECT_TRUE(sol.riccati.P[k].isZero(0.0));
  }
}

TEST(RiccatiLinearized, TerminalPairAndValue) {
  const auto m = assemble_matrices(ModelParams{});
  const auto sol = solve_riccati_linearized(m, TimeGrid(1.0, 1000));
  EXPECT_EQ(sol.pair.R.back(), Mat3::Identity());
  EXPECT_EQ(sol.pair.Tmat.back(), m.G);
  EXPECT_EQ(sol.riccati.P.back(), m.G);
  EXPECT_EQ(sol.riccati.method, RiccatiMethod::linearized);
}

TEST(RiccatiLinearized, AgreesWithDirectSolver) {
  const auto m = assemble_matrices(ModelParams{});
  const TimeGrid grid(1.0, 10000);
  const auto direct = solve_riccati_direct(m, grid);
  const auto lin = solve_riccati_linearized(m, grid);
  EXPECT_LE(max_entry_gap(direct, lin.riccati), 1e-6);
  EXPECT_GT(lin.pair.min_condition_R, 0.0);
}

TEST(RiccatiLinearized, AgreesWithDirectOnRandomAdmissibleParameters) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    ModelParams p;
    p.a = 0.5 + u(rng), p.b = 0.5 + u(rng), p.impact_h = u(rng);
    p.phi = p.impact_h / 2.0 + u(rng), p.psi = u(rng), p.rI = u(rng);
    p.decay_p = 2.0 * u(rng), p.rB = u(rng);
    const auto m = assemble_matrices(p);
    const TimeGrid grid(1.0, 10000);
    const auto direct = solve_riccati_direct(m, grid);
    const auto lin = solve_riccati_linearized(m, grid);
    EXPECT_LE(max_entry_gap(direct, lin.riccati), 1e-6) << "trial " << trial;
  }
}

TEST(RiccatiResidual, SecondOrderDecayAndInteriorAccuracy) {
  const auto m = assemble_matrices(ModelParams{});
  const double r1 = solve_riccati_direct(m, TimeGrid(1.0, 10000)).max_residual;
  const double r2 = solve_riccati_direct(m, TimeGrid(1.0, 20000)).max_residual;
  // Centered differences are second order; the maximum sits in the terminal layer.
  EXPECT_GT(r1 / r2, 2.5);
  const auto rg = solve_riccati_direct(m, TimeGrid(1.0, 10000));
  const auto profile = riccati_residual_profile(rg, m);
  // Away from the layer (t <= 0.5) the residual is pure O(dt²) truncation.
  double interior = 0.0;
  for (std::size_t k = 1; k <= 5000; ++k) interior = std::max(interior, profile[k]);
  EXPECT_LE(interior, 1e-6);
}

TEST(RiccatiResidual, DetectsCorruptedEntry) {
  const auto m = assemble_matrices(ModelParams{});
  auto rg = solve_riccati_direct(m, TimeGrid(1.0, 10000));
  rg.P[5000](0, 0) += 1.0;
  EXPECT_GT(riccati_residual(rg, m), 1e2);
}

TEST(FreilingConditions, DefaultParametersReport) {
  const auto r = verify_freiling_conditions(assemble_matrices(ModelParams{}));
  EXPECT_TRUE(r.cdg_positive_definite);
  EXPECT_NEAR(r.cdg_matrix(0, 0), 2.0 * (1.0 - 0.5e-3) / 1.2e-3, 1e-9);
  EXPECT_DOUBLE_EQ(r.cdg_matrix(1, 1), 2000.0);
  EXPECT_DOUBLE_EQ(r.cdg_matrix(2, 2), 1.0);
  // With the printed C, D the upper-left block of L + Lᵀ is zero while the
  // off-diagonal block is not, so L + Lᵀ is indefinite whenever h > 0.
  EXPECT_FALSE(r.L_sym_negative_semidefinite);
  EXPECT_GT(r.L_sym_eigenvalues.maxCoeff(), 0.0);
}

TEST(FreilingConditions, ZeroPenaltyBreaksDefiniteness) {
  ModelParams p;
  p.psi = 0.0;
  EXPECT_FALSE(verify_freiling_conditions(assemble_matrices(p)).cdg_positive_definite);
  ModelParams q;
  q.phi = q.impact_h / 2.0;
  EXPECT_FALSE(verify_freiling_conditions(assemble_matrices(q)).cdg_positive_definite);
}

TEST(FreilingConditions, RandomDecayRunsWithoutError) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams p;
    p.decay_p = u(rng), p.impact_h = u(rng), p.phi = u(rng), p.a = u(rng);
    const auto r = verify_freiling_conditions(assemble_matrices(p));
    EXPECT_TRUE(r.L_sym_eigenvalues.allFinite());
  }
}

TEST(SolveRiccati, AutomaticChoosesLinearizedInProvenRegime) {
  const ModelParams p;
  const auto m = assemble_matrices(p);
  const auto sol = solve_riccati(m, p, TimeGrid(1.0, 1000));
  EXPECT_EQ(sol.riccati.method, RiccatiMethod::linearized);
  EXPECT_TRUE(sol.pair.has_value());
  EXPECT_FALSE(sol.fallback_reason.has_value());
}

TEST(SolveRiccati, AutomaticChoosesDirectWithDecay) {
  ModelParams p;
  p.decay_p = 1.0;
  const auto m = assemble_matrices(p);
  const auto sol = solve_riccati(m, p, TimeGrid(1.0, 1000));
  EXPECT_EQ(sol.riccati.method, RiccatiMethod::direct);
  EXPECT_FALSE(sol.pair.has_value());
}
