#pragma once

#include <cmath>
#include <array>
#include <string>
#include <utility>
#include <vector>

namespace broker_nash {

/// Market, impact, penalty, signal and flow parameters plus initial state.
/// Defaults reproduce the numerical section's base experiment.
struct ModelParams {
  // instantaneous transaction costs: broker (lit), informed, uninformed
  double a = 1.2e-3;
  double b = 1e-3;
  double c = 1e-3;
  // transient impact: dY = (h nu - p Y) dt
  double impact_h = 1e-3;
  double decay_p = 0.0;
  // terminal and running inventory penalties
  double phi = 1.0;
  double psi = 1.0;
  double rB = 0.0;
  double rI = 0.0;
  double horizon_T = 1.0;
  // initial conditions
  double qB0 = 0.0;
  double qI0 = 0.0;
  double Y0 = 0.0;
  double S0 = 100.0;
  double sigma_S = 1.0;
  // OU signal alpha and OU uninformed speed xi
  double kappa_alpha = 5.0;
  double sigma_alpha = 1.0;
  double alpha0 = 0.0;
  double kappa_xi = 15.0;
  double sigma_xi = 100.0;
  double xi0 = 0.0;

  /// phi - h/2, the effective terminal penalty of the broker.
  double varphi() const { return phi - 0.5 * impact_h; }

  bool operator==(const ModelParams&) const = default;
};

/// Name/member table in declaration order, for serialization and sweeps.
inline const std::array<std::pair<const char*, double ModelParams::*>, 21>& param_fields() {
  static const std::array<std::pair<const char*, double ModelParams::*>, 21> fields = {{
      {"a", &ModelParams::a},
      {"b", &ModelParams::b},
      {"c", &ModelParams::c},
      {"impact_h", &ModelParams::impact_h},
      {"decay_p", &ModelParams::decay_p},
      {"phi", &ModelParams::phi},
      {"psi", &ModelParams::psi},
      {"rB", &ModelParams::rB},
      {"rI", &ModelParams::rI},
      {"horizon_T", &ModelParams::horizon_T},
      {"qB0", &ModelParams::qB0},
      {"qI0", &ModelParams::qI0},
      {"Y0", &ModelParams::Y0},
      {"S0", &ModelParams::S0},
      {"sigma_S", &ModelParams::sigma_S},
      {"kappa_alpha", &ModelParams::kappa_alpha},
      {"sigma_alpha", &ModelParams::sigma_alpha},
      {"alpha0", &ModelParams::alpha0},
      {"kappa_xi", &ModelParams::kappa_xi},
      {"sigma_xi", &ModelParams::sigma_xi},
      {"xi0", &ModelParams::xi0},
  }};
  return fields;
}

inline double* param_by_name(ModelParams& p, const std::string& name) {
  for (const auto& [key, member] : param_fields())
    if (name == key) return &(p.*member);
  return nullptr;
}

struct AssumptionCheck {
  std::string name;
  bool passed = true;
  /// Hard checks block the pipeline; soft ones only void the concavity proof.
  bool hard = true;
  std::string message;
};

struct ValidationReport {
  std::vector<AssumptionCheck> checks;

  /// All hard (positivity / finiteness) constraints hold.
  bool ok() const {
    for (const auto& c : checks)
      if (c.hard && !c.passed) return false;
    return true;
  }

  bool concavity_guaranteed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }

  const AssumptionCheck* first_failure() const {
    for (const auto& c : checks)
      if (c.hard && !c.passed) return &c;
    return nullptr;
  }
};

namespace detail {

inline void require(ValidationReport& r, const std::string& name, bool ok,
                    const std::string& msg, bool hard = true) {
  r.checks.push_back({name, ok, hard, ok ? std::string{} : msg});
}

}  // namespace detail

inline ValidationReport validate_params(const ModelParams& p) {
  ValidationReport r;
  using detail::require;
  for (const auto& [name, member] : param_fields())
    require(r, std::string("finite_") + name, std::isfinite(p.*member),
            std::string(name) + " must be finite");

  require(r, "a_positive", p.a > 0, "a must be > 0");
  require(r, "b_positive", p.b > 0, "b must be > 0");
  require(r, "c_positive", p.c > 0, "c must be > 0");
  require(r, "impact_h_nonnegative", p.impact_h >= 0, "impact_h must be >= 0");
  require(r, "decay_p_nonnegative", p.decay_p >= 0, "decay_p must be >= 0");
  require(r, "phi_nonnegative", p.phi >= 0, "phi must be >= 0");
  require(r, "psi_nonnegative", p.psi >= 0, "psi must be >= 0");
  require(r, "rB_nonnegative", p.rB >= 0, "rB must be >= 0");
  require(r, "rI_nonnegative", p.rI >= 0, "rI must be >= 0");
  require(r, "horizon_T_positive", p.horizon_T > 0, "horizon_T must be > 0");
  require(r, "sigma_S_nonnegative", p.sigma_S >= 0, "sigma_S must be >= 0");
  require(r, "kappa_alpha_nonnegative", p.kappa_alpha >= 0,
          "kappa_alpha must be >= 0");
  require(r, "sigma_alpha_nonnegative", p.sigma_alpha >= 0,
          "sigma_alpha must be >= 0");
  require(r, "kappa_xi_nonnegative", p.kappa_xi >= 0, "kappa_xi must be >= 0");
  require(r, "sigma_xi_nonnegative", p.sigma_xi >= 0, "sigma_xi must be >= 0");

  require(r, "varphi_nonnegative", p.varphi() >= 0,
          "concavity not guaranteed: phi - impact_h/2 < 0", false);
  require(r, "a_exceeds_p_h_T", p.a > p.decay_p * p.impact_h * p.horizon_T,
          "concavity not guaranteed: a <= decay_p * impact_h * horizon_T",
          false);
  return r;
}

}  // namespace broker_nash
