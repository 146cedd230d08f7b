#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "broker_nash/config.hpp"

namespace broker_nash {

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

/// CSV files start with one comment line carrying the resolved config.
inline void write_config_line(std::ostream& out, const Json& config) {
  out << "# config: " << config.dump() << '\n';
}

inline void write_row(std::ostream& out, const std::vector<double>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
  out << '\n';
}

}  // namespace detail

inline void write_riccati_csv(const std::string& path, const RiccatiGrid& rg, const Json& config) {
  auto out = detail::open_for_write(path);
  detail::write_config_line(out, config);
  out << "t,gB,gI,gY,hB,hI,hY,fB,fI,fY\n";
  for (std::size_t k = 0; k < rg.P.size(); ++k) {
    const Mat3& P = rg.P[k];
    detail::write_row(out, {rg.grid.node(k), P(0, 0), P(0, 1), P(0, 2), P(1, 0), P(1, 1),
                            P(1, 2), P(2, 0), P(2, 1), P(2, 2)});
  }
}

/// Reads a riccati.csv back into a grid (uniform grid inferred from the rows).
inline RiccatiGrid read_riccati_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::vector<std::array<double, 10>> rows;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("t,gB,gI,gY,hB,hI,hY,fB,fI,fY", 0) != 0)
        throw std::runtime_error(path + ": unexpected header");
      header = true;
      continue;
    }
    std::array<double, 10> r{};
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t i = 0; i < 10; ++i) {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error(path + ": short row");
      r[i] = std::stod(cell);
    }
    rows.push_back(r);
  }
  if (rows.size() < 2) throw std::runtime_error(path + ": need at least two rows");
  RiccatiGrid rg;
  rg.grid = TimeGrid(rows.back()[0], rows.size() - 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (std::abs(rows[k][0] - rg.grid.node(k)) > 1e-9 * rg.grid.dt() + 1e-12)
      throw SolverError(ErrorKind::GridMismatch, path + ": time column is not a uniform grid");
    Mat3 P;
    P << rows[k][1], rows[k][2], rows[k][3], rows[k][4], rows[k][5], rows[k][6], rows[k][7],
        rows[k][8], rows[k][9];
    rg.P.push_back(P);
  }
  return rg;
}

inline void write_offset_csv(const std::string& path, const OffsetGrid& og, const Json& config) {
  auto out = detail::open_for_write(path);
  detail::write_config_line(out, config);
  out << "t,g1,g2,h1,h2,f1,f2\n";
  for (std::size_t k = 0; k < og.g1.size(); ++k)
    detail::write_row(out, {og.grid.node(k), og.g1[k], og.g2[k], og.h1[k], og.h2[k], og.f1[k],
                            og.f2[k]});
}

inline void write_paths_csv(const std::string& path, const std::vector<PathBundle>& paths,
                            const Json& config) {
  auto out = detail::open_for_write(path);
  detail::write_config_line(out, config);
  out << "path,t,alpha,xi,S,Y,qB,qI,nu,eta,Z,XB,XI,mtmB,mtmI\n";
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& pb = paths[i];
    for (std::size_t k = 0; k < pb.grid.n_nodes(); ++k)
      detail::write_row(out, {static_cast<double>(i), pb.grid.node(k), pb.alpha[k], pb.xi[k],
                              pb.S[k], pb.Y[k], pb.qB[k], pb.qI[k], pb.nu[k], pb.eta[k], pb.Z[k],
                              pb.XB[k], pb.XI[k], pb.mtmB[k], pb.mtmI[k]});
  }
}

inline void write_bands_csv(const std::string& path, const MonteCarloReport& rep,
                            const Json& config) {
  auto out = detail::open_for_write(path);
  detail::write_config_line(out, config);
  out << "t";
  for (const auto& b : rep.bands) {
    const std::string n = to_string(b.process);
    out << ',' << n << "_q05," << n << "_median," << n << "_q95," << n << "_mean";
  }
  out << '\n';
  for (std::size_t i = 0; i < rep.band_nodes.size(); ++i) {
    std::vector<double> row = {rep.grid.node(rep.band_nodes[i])};
    for (const auto& b : rep.bands) {
      row.push_back(b.q05[i]);
      row.push_back(b.median[i]);
      row.push_back(b.q95[i]);
      row.push_back(b.mean[i]);
    }
    detail::write_row(out, row);
  }
}

inline void write_json(const std::string& path, const Json& j) {
  auto out = detail::open_for_write(path);
  out << j.dump(2) << '\n';
}

inline Json to_json(const BoundReport& r) {
  Json j;
  j["norm_A"] = r.norm_A;
  j["norm_B"] = r.norm_B;
  j["norm_A_hat"] = r.norm_A_hat;
  j["norm_B_hat"] = r.norm_B_hat;
  j["norm_G"] = r.norm_G;
  j["lhs_max"] = r.lhs_max;
  j["satisfied"] = r.satisfied;
  j["t_star"] = r.t_star ? Json(*r.t_star) : Json(nullptr);
  return j;
}

inline Json matrix_json(const Eigen::MatrixXd& M) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < M.cols(); ++k) row.push_back(M(i, k));
    rows.push_back(row);
  }
  return rows;
}

inline Json to_json(const ConditionReport& r) {
  Json j;
  j["cdg_matrix"] = matrix_json(r.cdg_matrix);
  j["cdg_positive_definite"] = r.cdg_positive_definite;
  j["L_sym_eigenvalues"] = std::vector<double>(r.L_sym_eigenvalues.data(), r.L_sym_eigenvalues.data() + 6);
  j["L_sym_negative_semidefinite"] = r.L_sym_negative_semidefinite;
  return j;
}

inline Json to_json(const SummaryStat& s) {
  return Json{{"mean", s.mean}, {"std_error", s.std_error}};
}

inline Json to_json(const MonteCarloReport& r) {
  Json j;
  j["n_paths"] = r.n_paths;
  j["seed"] = r.seed;
  j["grid"] = {{"horizon", r.grid.horizon()}, {"n_steps", r.grid.n_steps()}};
  j["non_finite_paths"] = r.non_finite_paths;
  j["J"] = {{"informed", {{"terminal", to_json(r.JI_terminal)}, {"integral", to_json(r.JI_integral)}}},
            {"broker", {{"terminal", to_json(r.JB_terminal)}, {"integral", to_json(r.JB_integral)}}}};
  j["representation_gap"] = {
      {"informed", {{"raw", to_json(r.gap_I)}, {"compensated", to_json(r.compensated_gap_I)}}},
      {"broker", {{"raw", to_json(r.gap_B)}, {"compensated", to_json(r.compensated_gap_B)}}}};
  j["terminal_violation"] = {{"broker", r.terminal_violation_broker},
                             {"informed", r.terminal_violation_informed}};
  Json bands = Json::object();
  std::vector<double> times;
  for (auto k : r.band_nodes) times.push_back(r.grid.node(k));
  bands["t"] = times;
  for (const auto& b : r.bands)
    bands[to_string(b.process)] = {{"q05", b.q05}, {"median", b.median}, {"q95", b.q95}, {"mean", b.mean}};
  j["bands"] = bands;
  return j;
}

inline Json to_json(const GateauxEstimate& g) {
  return Json{{"estimate", g.estimate},
              {"std_error", g.std_error},
              {"per_epsilon", g.per_epsilon},
              {"richardson", g.richardson},
              {"second_difference", g.second_difference},
              {"second_difference_se", g.second_difference_se}};
}

}  // namespace broker_nash
