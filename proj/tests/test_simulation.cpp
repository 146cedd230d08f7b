#include <gtest/gtest.h>

#include <algorithm>

#include "broker_nash/io.hpp"

using namespace broker_nash;

namespace {

struct Solved {
  ModelParams prm;
  SystemMatrices m;
  RiccatiGrid rg;
  OffsetGrid og;

  Solved(const ModelParams& p, std::size_t n)
      : prm(p), m(assemble_matrices(p)),
        rg(solve_riccati(m, p, TimeGrid(p.horizon_T, n)).riccati),
        og(solve_offset_odes(rg, p)) {}
};

ModelParams zero_noise() {
  ModelParams p;
  p.sigma_S = p.sigma_alpha = p.sigma_xi = 0.0;
  return p;
}

}  // namespace

TEST(Simulation, ZeroNoiseZeroDataStaysAtZero) {
  const Solved s(zero_noise(), 200);
  const auto rep = simulate_equilibrium(s.prm, s.rg, s.og, 4, 1, {.sample_paths = 1});
  const auto& pb = rep.samples.at(0);
  for (Process p : kAllProcesses) {
    if (p == Process::S) continue;
    for (double v : pb.process(p)) ASSERT_EQ(v, 0.0) << to_string(p);
  }
  for (double v : pb.S) ASSERT_EQ(v, s.prm.S0);
  EXPECT_EQ(rep.JI_terminal.mean, 0.0);
  EXPECT_EQ(rep.JB_terminal.mean, 0.0);
  EXPECT_EQ(rep.JI_integral.mean, 0.0);
  EXPECT_EQ(rep.JB_integral.mean, 0.0);
}

TEST(Simulation, ConstantInventoryValue) {
  ModelParams p = zero_noise();
  p.qI0 = 1.0;
  const TimeGrid grid(1.0, 100);
  const auto d = generate_drivers(p, grid, 1, 0);
  const std::vector<double> zero(grid.n_nodes(), 0.0);
  const auto pb = propagate_open_loop(p, d, zero, zero);
  EXPECT_DOUBLE_EQ(evaluate_performance(pb, p, PerformanceForm::terminal).JI, 99.0);
  EXPECT_DOUBLE_EQ(evaluate_performance(pb, p, PerformanceForm::integral).JI, 99.0);
}

TEST(Simulation, UninformedCostEntersBrokerLinearly) {
  const Solved s(ModelParams{}, 500);
  const auto d = generate_drivers(s.prm, s.rg.grid, 3, 5);
  const auto pb = simulate_equilibrium_path(s.prm, s.rg, s.og, d);
  ModelParams no_c = s.prm;
  no_c.c = 0.0;
  const double with_c = evaluate_performance(pb, s.prm, PerformanceForm::integral).JB;
  const double without = evaluate_performance(pb, no_c, PerformanceForm::integral).JB;
  const double dt = s.rg.grid.dt();
  double xi2 = 0.0;
  for (std::size_t k = 0; k < d.xi.size(); ++k) {
    const double w = (k == 0 || k + 1 == d.xi.size()) ? 0.5 : 1.0;
    xi2 += w * d.xi[k] * d.xi[k] * dt;
  }
  EXPECT_NEAR(with_c - without, s.prm.c * xi2, 1e-9 * (1.0 + std::abs(with_c)));
  EXPECT_GT(with_c - without, 0.0);
}

TEST(Quantiles, TwoPointLinearInterpolation) {
  const auto q = quantile_bands({{0.0}, {1.0}});
  EXPECT_DOUBLE_EQ(q[0][0], 0.05);
  EXPECT_DOUBLE_EQ(q[1][0], 0.95);
}

TEST(Quantiles, ConstantEnsemble) {
  const std::vector<std::vector<double>> e(7, std::vector<double>{3.5, -2.0});
  const auto q = quantile_bands(e);
  for (const auto& row : q) {
    EXPECT_EQ(row[0], 3.5);
    EXPECT_EQ(row[1], -2.0);
  }
}

TEST(Quantiles, PermutationInvariant) {
  std::vector<std::vector<double>> e;
  for (int i = 0; i < 25; ++i) e.push_back({std::sin(i * 1.7), std::cos(i * 0.3)});
  auto f = e;
  std::reverse(f.begin(), f.end());
  std::rotate(f.begin(), f.begin() + 7, f.end());
  EXPECT_EQ(quantile_bands(e, {0.05, 0.5, 0.95}), quantile_bands(f, {0.05, 0.5, 0.95}));
}

TEST(Quantiles, RejectsSinglePath) {
  EXPECT_THROW(quantile_bands({{1.0}}), SolverError);
}

TEST(Drivers, AntitheticFlipsEveryInnovation) {
  const ModelParams p;
  const TimeGrid grid(1.0, 300);
  const auto d = generate_drivers(p, grid, 9, 2);
  const auto a = generate_drivers(p, grid, 9, 2, true);
  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    EXPECT_EQ(a.alpha[k], -d.alpha[k]);
    EXPECT_EQ(a.xi[k], -d.xi[k]);
    EXPECT_EQ(a.W[k], -d.W[k]);
  }
}

TEST(Drivers, OuStationaryVariance) {
  ModelParams p;
  p.alpha0 = 0.0;
  const TimeGrid grid(1.0, 10);
  double s2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = generate_drivers(p, grid, 11, static_cast<std::uint64_t>(i)).alpha.back();
    s2 += v * v;
  }
  // Var alpha_T = sigma² (1 - e^{-2 kappa T}) / (2 kappa)
  const double var = p.sigma_alpha * p.sigma_alpha * -std::expm1(-2.0 * p.kappa_alpha) /
                     (2.0 * p.kappa_alpha);
  EXPECT_NEAR(s2 / n, var, 4.0 * var * std::sqrt(2.0 / n));
}

TEST(Drivers, CoarsenSubsamples) {
  const ModelParams p;
  const auto d = generate_drivers(p, TimeGrid(1.0, 12), 4, 0);
  const auto c = d.coarsen(3);
  ASSERT_EQ(c.grid.n_steps(), 4u);
  for (std::size_t k = 0; k <= 4; ++k) {
    EXPECT_EQ(c.alpha[k], d.alpha[3 * k]);
    EXPECT_EQ(c.xi[k], d.xi[3 * k]);
    EXPECT_EQ(c.W[k], d.W[3 * k]);
  }
  EXPECT_THROW(d.coarsen(5), SolverError);
  EXPECT_THROW(d.coarsen(0), SolverError);
}

TEST(Simulation, OpenLoopReproducesEquilibriumPath) {
  const Solved s(ModelParams{}, 500);
  const auto d = generate_drivers(s.prm, s.rg.grid, 17, 3);
  const auto eq = simulate_equilibrium_path(s.prm, s.rg, s.og, d);
  const auto ol = propagate_open_loop(s.prm, d, eq.nu, eq.eta);
  for (Process p : {Process::qB, Process::qI, Process::Y, Process::S, Process::XB, Process::XI,
                    Process::mtmB, Process::mtmI})
    EXPECT_EQ(ol.process(p), eq.process(p)) << to_string(p);
}

TEST(Simulation, GridMismatchIsRejected) {
  const Solved s(ModelParams{}, 100);
  const auto d = generate_drivers(s.prm, TimeGrid(1.0, 50), 1, 0);
  EXPECT_THROW(simulate_equilibrium_path(s.prm, s.rg, s.og, d), SolverError);
}

TEST(Simulation, NoDecayIgnoresImpactCostate) {
  // With p = 0 the Z-offset never reaches the dynamics.
  const Solved s(ModelParams{}, 400);
  OffsetGrid perturbed = s.og;
  for (std::size_t k = 0; k < perturbed.f1.size(); ++k) {
    perturbed.f1[k] += 3.0 * std::sin(static_cast<double>(k));
    perturbed.f2[k] -= 0.7;
  }
  const auto d = generate_drivers(s.prm, s.rg.grid, 5, 1);
  const auto a = simulate_equilibrium_path(s.prm, s.rg, s.og, d);
  const auto b = simulate_equilibrium_path(s.prm, s.rg, perturbed, d);
  for (Process p : {Process::qB, Process::qI, Process::Y, Process::nu, Process::eta, Process::S,
                    Process::XB, Process::XI})
    EXPECT_EQ(a.process(p), b.process(p)) << to_string(p);
  EXPECT_NE(a.Z, b.Z);
}

TEST(Simulation, SignFlipSymmetryOfInformedBand) {
  // Zero initial data: antithetic drivers give the negated path.
  const Solved s(ModelParams{}, 500);
  std::vector<std::vector<double>> ens;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto up = simulate_equilibrium_path(s.prm, s.rg, s.og, generate_drivers(s.prm, s.rg.grid, 8, i));
    const auto dn =
        simulate_equilibrium_path(s.prm, s.rg, s.og, generate_drivers(s.prm, s.rg.grid, 8, i, true));
    EXPECT_NEAR(up.qI.back(), -dn.qI.back(), 1e-9 * (1.0 + std::abs(up.qI.back())));
    ens.push_back({up.qI.back()});
    ens.push_back({dn.qI.back()});
  }
  const auto q = quantile_bands(ens);
  EXPECT_NEAR(q[0][0], -q[1][0], 1e-8);
  EXPECT_GT(q[1][0], 0.0);
}

TEST(Simulation, ThreadCountDoesNotChangeTheReport) {
  const Solved s(ModelParams{}, 400);
  const auto one = simulate_equilibrium(s.prm, s.rg, s.og, 300, 99, {.threads = 1});
  const auto four = simulate_equilibrium(s.prm, s.rg, s.og, 300, 99, {.threads = 4});
  EXPECT_EQ(to_json(one).dump(), to_json(four).dump());
}

TEST(Simulation, TerminalFeedbackConditions) {
  const Solved s(ModelParams{}, 2000);
  const auto rep = simulate_equilibrium(s.prm, s.rg, s.og, 200, 5);
  EXPECT_EQ(rep.non_finite_paths, 0u);
  EXPECT_LE(rep.terminal_violation_broker, 1e-6);
  EXPECT_LE(rep.terminal_violation_informed, 1e-6);
}

TEST(Simulation, BandNodesIncludeMidpointAndHorizon) {
  const auto nodes = band_node_indices(TimeGrid(1.0, 2000), 7);
  EXPECT_TRUE(std::binary_search(nodes.begin(), nodes.end(), 1000u));
  EXPECT_EQ(nodes.back(), 2000u);
  EXPECT_EQ(nodes.front(), 0u);
}

TEST(Simulation, RejectsBadInputs) {
  const Solved s(ModelParams{}, 100);
  EXPECT_THROW(simulate_equilibrium(s.prm, s.rg, s.og, 0, 1), SolverError);
  EXPECT_THROW(simulate_equilibrium(s.prm, s.rg, s.og, 2, 1, {.driver_refinement = 0}), SolverError);
}
