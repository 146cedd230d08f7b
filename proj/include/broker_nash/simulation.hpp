#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "broker_nash/errors.hpp"
#include "broker_nash/offset.hpp"
#include "broker_nash/parallel.hpp"
#include "broker_nash/random.hpp"
#include "broker_nash/riccati.hpp"
#include "broker_nash/time_grid.hpp"

namespace broker_nash {

/// Exogenous randomness of one path on a grid: the signal alpha, the
/// uninformed flow xi (both exact OU samples at the nodes) and the Brownian
/// motion W driving the midprice martingale M^S = sigma_S W.
struct PathDrivers {
  TimeGrid grid;
  std::vector<double> alpha;
  std::vector<double> xi;
  std::vector<double> W;

  /// Same path on the grid with n_steps / factor steps. Subsampling an exact
  /// OU path gives an exact OU path on the coarse grid, so coarse and fine
  /// simulations share their random numbers.
  PathDrivers coarsen(std::size_t factor) const {
    const std::size_t n = grid.n_steps();
    if (factor == 0 || n % factor != 0)
      throw SolverError(ErrorKind::GridMismatch, "coarsening factor must divide n_steps");
    PathDrivers out;
    out.grid = TimeGrid(grid.horizon(), n / factor);
    for (std::size_t k = 0; k <= n; k += factor) {
      out.alpha.push_back(alpha[k]);
      out.xi.push_back(xi[k]);
      out.W.push_back(W[k]);
    }
    return out;
  }
};

namespace detail {

struct OuStep {
  double decay;
  double sd;
};

inline OuStep ou_step(double kappa, double sigma, double dt) {
  if (kappa == 0.0) return {1.0, sigma * std::sqrt(dt)};
  return {std::exp(-kappa * dt), sigma * std::sqrt(-std::expm1(-2.0 * kappa * dt) / (2.0 * kappa))};
}

}  // namespace detail

/// Drivers for path `path` of the stream keyed by `seed`. Step k uses the
/// Philox counters (path, k, 0) for the OU innovations and (path, k, 1) for
/// the price noise; `antithetic` negates every innovation.
inline PathDrivers generate_drivers(const ModelParams& prm, const TimeGrid& grid,
                                    std::uint64_t seed, std::uint64_t path,
                                    bool antithetic = false) {
  const std::size_t n = grid.n_steps();
  const double dt = grid.dt();
  const auto oa = detail::ou_step(prm.kappa_alpha, prm.sigma_alpha, dt);
  const auto ox = detail::ou_step(prm.kappa_xi, prm.sigma_xi, dt);
  const double sqdt = std::sqrt(dt);
  const double sign = antithetic ? -1.0 : 1.0;

  PathDrivers d;
  d.grid = grid;
  d.alpha.resize(n + 1);
  d.xi.resize(n + 1);
  d.W.resize(n + 1);
  d.alpha[0] = prm.alpha0;
  d.xi[0] = prm.xi0;
  d.W[0] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto step = static_cast<std::uint32_t>(k);
    const auto z = normal_pair(seed, path, step, 0);
    const auto zw = normal_pair(seed, path, step, 1);
    d.alpha[k + 1] = oa.decay * d.alpha[k] + oa.sd * sign * z[0];
    d.xi[k + 1] = ox.decay * d.xi[k] + ox.sd * sign * z[1];
    d.W[k + 1] = d.W[k] + sqdt * sign * zw[0];
  }
  return d;
}

enum class Process { alpha, xi, S, Y, qB, qI, nu, eta, Z, XB, XI, mtmB, mtmI };

inline constexpr std::array<Process, 13> kAllProcesses = {
    Process::alpha, Process::xi, Process::S,  Process::Y,  Process::qB,   Process::qI,  Process::nu,
    Process::eta,   Process::Z,  Process::XB, Process::XI, Process::mtmB, Process::mtmI};

inline const char* to_string(Process p) {
  switch (p) {
    case Process::alpha: return "alpha";
    case Process::xi: return "xi";
    case Process::S: return "S";
    case Process::Y: return "Y";
    case Process::qB: return "qB";
    case Process::qI: return "qI";
    case Process::nu: return "nu";
    case Process::eta: return "eta";
    case Process::Z: return "Z";
    case Process::XB: return "XB";
    case Process::XI: return "XI";
    case Process::mtmB: return "mtmB";
    case Process::mtmI: return "mtmI";
  }
  return "?";
}

inline std::optional<Process> process_from_string(const std::string& name) {
  for (Process p : kAllProcesses)
    if (name == to_string(p)) return p;
  return std::nullopt;
}

/// All processes of one simulated path, one value per grid node.
/// MS is the midprice martingale sigma_S W (not a logged process).
struct PathBundle {
  TimeGrid grid;
  std::vector<double> alpha, xi, S, Y, qB, qI, nu, eta, Z, XB, XI, mtmB, mtmI, MS;

  const std::vector<double>& process(Process p) const {
    switch (p) {
      case Process::alpha: return alpha;
      case Process::xi: return xi;
      case Process::S: return S;
      case Process::Y: return Y;
      case Process::qB: return qB;
      case Process::qI: return qI;
      case Process::nu: return nu;
      case Process::eta: return eta;
      case Process::Z: return Z;
      case Process::XB: return XB;
      case Process::XI: return XI;
      case Process::mtmB: return mtmB;
      case Process::mtmI: return mtmI;
    }
    return alpha;
  }

  bool all_finite() const {
    for (Process p : kAllProcesses)
      for (double v : process(p))
        if (!std::isfinite(v)) return false;
    return true;
  }
};

namespace detail {

inline void resize_bundle(PathBundle& pb, const TimeGrid& grid) {
  pb.grid = grid;
  const std::size_t m = grid.n_nodes();
  for (auto* v : {&pb.alpha, &pb.xi, &pb.S, &pb.Y, &pb.qB, &pb.qI, &pb.nu, &pb.eta, &pb.Z,
                  &pb.XB, &pb.XI, &pb.mtmB, &pb.mtmI, &pb.MS})
    v->assign(m, 0.0);
}

/// Initial state and exogenous inputs at node 0.
inline void start_bundle(PathBundle& pb, const ModelParams& prm, const PathDrivers& d) {
  resize_bundle(pb, d.grid);
  for (std::size_t k = 0; k < d.grid.n_nodes(); ++k) {
    pb.alpha[k] = d.alpha[k];
    pb.xi[k] = d.xi[k];
    pb.MS[k] = prm.sigma_S * d.W[k];
  }
  pb.qB[0] = prm.qB0;
  pb.qI[0] = prm.qI0;
  pb.Y[0] = prm.Y0;
  pb.S[0] = prm.S0 + prm.Y0;
}

/// Explicit Euler step from node k to k+1 for inventories, impact and cash,
/// using the controls stored at node k. `signal` carries ∫_0^{t_k} alpha.
inline void advance(PathBundle& pb, const ModelParams& prm, std::size_t k, double dt,
                    double& signal) {
  const double nu = pb.nu[k], eta = pb.eta[k], xi = pb.xi[k], S = pb.S[k];
  pb.qB[k + 1] = pb.qB[k] + (nu - eta - xi) * dt;
  pb.qI[k + 1] = pb.qI[k] + eta * dt;
  pb.Y[k + 1] = pb.Y[k] + (prm.impact_h * nu - prm.decay_p * pb.Y[k]) * dt;
  pb.XB[k + 1] = pb.XB[k] + (-(S + prm.a * nu) * nu + (S + prm.b * eta) * eta +
                             (S + prm.c * xi) * xi) * dt;
  pb.XI[k + 1] = pb.XI[k] - (S + prm.b * eta) * eta * dt;
  signal += pb.alpha[k] * dt;
  pb.S[k + 1] = prm.S0 + signal + pb.Y[k + 1] + pb.MS[k + 1];
}

inline void mark_to_market(PathBundle& pb, std::size_t k) {
  pb.mtmB[k] = pb.XB[k] + pb.qB[k] * pb.S[k];
  pb.mtmI[k] = pb.XI[k] + pb.qI[k] * pb.S[k];
}

}  // namespace detail

/// One equilibrium path: at every node (nu, eta, Z) = l_t + P_t (qB, qI, Y).
inline PathBundle simulate_equilibrium_path(const ModelParams& prm, const RiccatiGrid& rg,
                                            const OffsetGrid& og, const PathDrivers& d) {
  if (!(rg.grid == og.grid) || !(rg.grid == d.grid))
    throw SolverError(ErrorKind::GridMismatch, "Riccati, offset and driver grids differ");
  const std::size_t n = d.grid.n_steps();
  const double dt = d.grid.dt();
  PathBundle pb;
  detail::start_bundle(pb, prm, d);
  double signal = 0.0;
  for (std::size_t k = 0;; ++k) {
    const Vec3 X(pb.qB[k], pb.qI[k], pb.Y[k]);
    const Vec3 ctl = og.ell(k, pb.alpha[k], pb.xi[k]) + rg.P[k] * X;
    pb.nu[k] = ctl(0);
    pb.eta[k] = ctl(1);
    pb.Z[k] = ctl(2);
    detail::mark_to_market(pb, k);
    if (k == n) break;
    detail::advance(pb, prm, k, dt, signal);
  }
  return pb;
}

/// State, cash and price paths generated by given speed paths (open loop).
/// Z is not defined for arbitrary controls and is left at zero.
inline PathBundle propagate_open_loop(const ModelParams& prm, const PathDrivers& d,
                                      const std::vector<double>& nu,
                                      const std::vector<double>& eta) {
  const std::size_t m = d.grid.n_nodes();
  if (nu.size() != m || eta.size() != m)
    throw SolverError(ErrorKind::GridMismatch, "control paths do not match the driver grid");
  const std::size_t n = d.grid.n_steps();
  const double dt = d.grid.dt();
  PathBundle pb;
  detail::start_bundle(pb, prm, d);
  double signal = 0.0;
  for (std::size_t k = 0;; ++k) {
    pb.nu[k] = nu[k];
    pb.eta[k] = eta[k];
    detail::mark_to_market(pb, k);
    if (k == n) break;
    detail::advance(pb, prm, k, dt, signal);
  }
  return pb;
}

enum class PerformanceForm { terminal, integral };

struct Performance {
  double JI = 0.0;
  double JB = 0.0;
};

namespace detail {

template <class F>
double trapezoid(std::size_t nodes, double dt, F&& f) {
  if (nodes < 2) return 0.0;
  double s = 0.5 * (f(0) + f(nodes - 1));
  for (std::size_t k = 1; k + 1 < nodes; ++k) s += f(k);
  return s * dt;
}

}  // namespace detail

/// Pathwise performance. Terminal form: X_T + Q_T S_T - penalty Q_T² -
/// r ∫Q². Integral form: the product-rule representation, i.e. initial value
/// plus ∫{ -cost·speed² + Q (alpha + h nu - p Y - 2 penalty dQ/dt - r Q) }, whose
/// expectation equals the terminal form. Both use trapezoidal quadrature.
inline Performance evaluate_performance(const PathBundle& pb, const ModelParams& prm,
                                        PerformanceForm form) {
  const std::size_t m = pb.grid.n_nodes();
  const double dt = pb.grid.dt();
  const std::size_t n = m - 1;
  Performance J;
  if (form == PerformanceForm::terminal) {
    const double runI = detail::trapezoid(m, dt, [&](std::size_t k) { return pb.qI[k] * pb.qI[k]; });
    const double runB = detail::trapezoid(m, dt, [&](std::size_t k) { return pb.qB[k] * pb.qB[k]; });
    J.JI = pb.XI[n] + pb.qI[n] * pb.S[n] - prm.psi * pb.qI[n] * pb.qI[n] - prm.rI * runI;
    J.JB = pb.XB[n] + pb.qB[n] * pb.S[n] - prm.phi * pb.qB[n] * pb.qB[n] - prm.rB * runB;
    return J;
  }
  const double S0 = pb.S[0];
  const double qI0 = pb.qI[0], qB0 = pb.qB[0];
  J.JI = S0 * qI0 - prm.psi * qI0 * qI0 + detail::trapezoid(m, dt, [&](std::size_t k) {
           const double drift = pb.alpha[k] + prm.impact_h * pb.nu[k] - prm.decay_p * pb.Y[k];
           return -prm.b * pb.eta[k] * pb.eta[k] +
                  pb.qI[k] * (drift - 2.0 * prm.psi * pb.eta[k] - prm.rI * pb.qI[k]);
         });
  J.JB = S0 * qB0 - prm.phi * qB0 * qB0 + detail::trapezoid(m, dt, [&](std::size_t k) {
           const double drift = pb.alpha[k] + prm.impact_h * pb.nu[k] - prm.decay_p * pb.Y[k];
           const double dq = pb.nu[k] - pb.eta[k] - pb.xi[k];
           return -prm.a * pb.nu[k] * pb.nu[k] + prm.b * pb.eta[k] * pb.eta[k] +
                  prm.c * pb.xi[k] * pb.xi[k] +
                  pb.qB[k] * (drift - 2.0 * prm.phi * dq - prm.rB * pb.qB[k]);
         });
  return J;
}

/// Pathwise stochastic integrals ∫ Q dM^S (left point). They have zero mean
/// and account for the per-path difference between the two forms.
inline Performance price_martingale_terms(const PathBundle& pb) {
  Performance m;
  for (std::size_t k = 0; k + 1 < pb.grid.n_nodes(); ++k) {
    const double dM = pb.MS[k + 1] - pb.MS[k];
    m.JI += pb.qI[k] * dM;
    m.JB += pb.qB[k] * dM;
  }
  return m;
}

/// Linear-interpolation quantile between order statistics (Hyndman-Fan type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 0) throw SolverError(ErrorKind::InvalidInput, "quantile of an empty sample");
  const double h = (static_cast<double>(n) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// Nodewise quantiles of ensemble[path][node]; result[prob][node].
inline std::vector<std::vector<double>> quantile_bands(
    const std::vector<std::vector<double>>& ensemble, const std::vector<double>& probs = {0.05, 0.95}) {
  if (ensemble.size() < 2)
    throw SolverError(ErrorKind::InvalidInput, "quantile bands need at least two paths");
  const std::size_t nodes = ensemble.front().size();
  std::vector<std::vector<double>> out(probs.size(), std::vector<double>(nodes));
  std::vector<double> column(ensemble.size());
  for (std::size_t k = 0; k < nodes; ++k) {
    for (std::size_t i = 0; i < ensemble.size(); ++i) column[i] = ensemble[i].at(k);
    std::sort(column.begin(), column.end());
    for (std::size_t j = 0; j < probs.size(); ++j) out[j][k] = quantile_sorted(column, probs[j]);
  }
  return out;
}

struct SummaryStat {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Sample mean and standard error, accumulated in index order.
inline SummaryStat summarize(const std::vector<double>& x) {
  SummaryStat s;
  if (x.empty()) return s;
  double sum = 0.0;
  for (double v : x) sum += v;
  s.mean = sum / static_cast<double>(x.size());
  if (x.size() < 2) return s;
  double ss = 0.0;
  for (double v : x) ss += (v - s.mean) * (v - s.mean);
  s.std_error = std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
  return s;
}

struct ProcessBands {
  Process process = Process::qB;
  std::vector<double> q05, median, q95, mean;
};

struct SimulationOptions {
  std::vector<Process> log_processes = {Process::qB, Process::qI, Process::Y, Process::nu,
                                        Process::eta, Process::mtmB, Process::mtmI};
  /// Target number of band nodes; T/2 and T are always included.
  std::size_t band_points = 100;
  /// Number of leading paths returned in full.
  std::size_t sample_paths = 0;
  /// Drivers are generated on a grid this many times finer and subsampled,
  /// so runs on different grids can share random numbers.
  std::size_t driver_refinement = 1;
  /// 0 means thread_count().
  unsigned threads = 0;
};

struct MonteCarloReport {
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  TimeGrid grid;
  std::size_t non_finite_paths = 0;
  SummaryStat JI_terminal, JI_integral, JB_terminal, JB_integral;
  /// terminal minus integral form, per path
  SummaryStat gap_I, gap_B;
  /// same gap after removing the zero-mean price-noise integral
  SummaryStat compensated_gap_I, compensated_gap_B;
  /// max over paths of |nu_T + (2 phi - h)/(2a) qB_T| / (1 + |qB_T|)
  double terminal_violation_broker = 0.0;
  /// max over paths of |eta_T + psi/b qI_T| / (1 + |qI_T|)
  double terminal_violation_informed = 0.0;
  std::vector<std::size_t> band_nodes;
  std::vector<ProcessBands> bands;
  std::vector<PathBundle> samples;

  const ProcessBands* band(Process p) const {
    for (const auto& b : bands)
      if (b.process == p) return &b;
    return nullptr;
  }

  /// Index into band_nodes of grid node k, if it is a band node.
  std::optional<std::size_t> band_index(std::size_t k) const {
    const auto it = std::lower_bound(band_nodes.begin(), band_nodes.end(), k);
    if (it == band_nodes.end() || *it != k) return std::nullopt;
    return static_cast<std::size_t>(it - band_nodes.begin());
  }
};

inline std::vector<std::size_t> band_node_indices(const TimeGrid& grid, std::size_t band_points) {
  const std::size_t n = grid.n_steps();
  const std::size_t stride = std::max<std::size_t>(1, band_points == 0 ? n : n / band_points);
  std::vector<std::size_t> nodes;
  for (std::size_t k = 0; k <= n; k += stride) nodes.push_back(k);
  nodes.push_back(n);
  if (n % 2 == 0) nodes.push_back(n / 2);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

/// Path-parallel Monte Carlo of the equilibrium. Each path is a pure function
/// of (seed, path index, grid), results land in per-path slots and every
/// reduction runs in path order, so the report does not depend on threads.
inline MonteCarloReport simulate_equilibrium(const ModelParams& prm, const RiccatiGrid& rg,
                                             const OffsetGrid& og, std::size_t n_paths,
                                             std::uint64_t seed,
                                             const SimulationOptions& opts = {}) {
  if (!(rg.grid == og.grid))
    throw SolverError(ErrorKind::GridMismatch, "Riccati and offset grids differ");
  if (n_paths == 0) throw SolverError(ErrorKind::InvalidInput, "n_paths must be >= 1");
  if (opts.driver_refinement == 0)
    throw SolverError(ErrorKind::InvalidInput, "driver_refinement must be >= 1");
  const TimeGrid& grid = rg.grid;
  const std::size_t n = grid.n_steps();
  const TimeGrid driver_grid(grid.horizon(), n * opts.driver_refinement);

  MonteCarloReport rep;
  rep.n_paths = n_paths;
  rep.seed = seed;
  rep.grid = grid;
  rep.band_nodes = band_node_indices(grid, opts.band_points);
  const std::size_t nb = rep.band_nodes.size();
  const std::size_t np = opts.log_processes.size();

  struct Slot {
    bool finite = false;
    Performance term, integ, mart;
    double viol_B = 0.0, viol_I = 0.0;
    std::vector<double> logged;  // [process][band node]
  };
  std::vector<Slot> slots(n_paths);
  std::vector<PathBundle> samples(std::min(opts.sample_paths, n_paths));

  const double nu_gain = (2.0 * prm.phi - prm.impact_h) / (2.0 * prm.a);
  const double eta_gain = prm.psi / prm.b;

  parallel_for(
      n_paths,
      [&](std::size_t i) {
        PathDrivers d = generate_drivers(prm, driver_grid, seed, i);
        if (opts.driver_refinement > 1) d = d.coarsen(opts.driver_refinement);
        PathBundle pb = simulate_equilibrium_path(prm, rg, og, d);
        Slot& s = slots[i];
        s.finite = pb.all_finite();
        if (s.finite) {
          s.term = evaluate_performance(pb, prm, PerformanceForm::terminal);
          s.integ = evaluate_performance(pb, prm, PerformanceForm::integral);
          s.mart = price_martingale_terms(pb);
          s.viol_B = std::abs(pb.nu[n] + nu_gain * pb.qB[n]) / (1.0 + std::abs(pb.qB[n]));
          s.viol_I = std::abs(pb.eta[n] + eta_gain * pb.qI[n]) / (1.0 + std::abs(pb.qI[n]));
          s.logged.resize(np * nb);
          for (std::size_t j = 0; j < np; ++j) {
            const auto& v = pb.process(opts.log_processes[j]);
            for (std::size_t b = 0; b < nb; ++b) s.logged[j * nb + b] = v[rep.band_nodes[b]];
          }
        }
        if (i < samples.size()) samples[i] = std::move(pb);
      },
      opts.threads == 0 ? thread_count() : opts.threads);

  std::vector<double> jit, jii, jbt, jbi, gi, gb, cgi, cgb;
  std::vector<std::size_t> good;
  for (std::size_t i = 0; i < n_paths; ++i) {
    const Slot& s = slots[i];
    if (!s.finite) {
      ++rep.non_finite_paths;
      continue;
    }
    good.push_back(i);
    jit.push_back(s.term.JI);
    jii.push_back(s.integ.JI);
    jbt.push_back(s.term.JB);
    jbi.push_back(s.integ.JB);
    gi.push_back(s.term.JI - s.integ.JI);
    gb.push_back(s.term.JB - s.integ.JB);
    cgi.push_back(s.term.JI - s.integ.JI - s.mart.JI);
    cgb.push_back(s.term.JB - s.integ.JB - s.mart.JB);
    rep.terminal_violation_broker = std::max(rep.terminal_violation_broker, s.viol_B);
    rep.terminal_violation_informed = std::max(rep.terminal_violation_informed, s.viol_I);
  }
  rep.JI_terminal = summarize(jit);
  rep.JI_integral = summarize(jii);
  rep.JB_terminal = summarize(jbt);
  rep.JB_integral = summarize(jbi);
  rep.gap_I = summarize(gi);
  rep.gap_B = summarize(gb);
  rep.compensated_gap_I = summarize(cgi);
  rep.compensated_gap_B = summarize(cgb);

  std::vector<double> column(good.size());
  for (std::size_t j = 0; j < np; ++j) {
    ProcessBands pbands;
    pbands.process = opts.log_processes[j];
    for (auto* v : {&pbands.q05, &pbands.median, &pbands.q95, &pbands.mean}) v->assign(nb, 0.0);
    if (!good.empty()) {
      for (std::size_t b = 0; b < nb; ++b) {
        double sum = 0.0;
        for (std::size_t g = 0; g < good.size(); ++g) {
          column[g] = slots[good[g]].logged[j * nb + b];
          sum += column[g];
        }
        pbands.mean[b] = sum / static_cast<double>(good.size());
        std::sort(column.begin(), column.end());
        pbands.q05[b] = quantile_sorted(column, 0.05);
        pbands.median[b] = quantile_sorted(column, 0.5);
        pbands.q95[b] = quantile_sorted(column, 0.95);
      }
    }
    rep.bands.push_back(std::move(pbands));
  }
  rep.samples = std::move(samples);
  return rep;
}

}  // namespace broker_nash
