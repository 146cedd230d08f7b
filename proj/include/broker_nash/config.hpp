#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "broker_nash/gateaux.hpp"
#include "broker_nash/params.hpp"
#include "broker_nash/picard.hpp"
#include "broker_nash/simulation.hpp"

namespace broker_nash {

using Json = nlohmann::ordered_json;

/// Malformed or inadmissible experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SweepSpec {
  std::string parameter;
  std::vector<double> values;
  bool operator==(const SweepSpec&) const = default;
};

/// Zero-noise problem for the Picard oracle.
struct PicardSpec {
  ModelParams params;
  PicardConfig solver;
};

struct GateauxSpec {
  GateauxConfig cfg;
  /// Grid for the best-response check (finite-difference bias is O(dt)).
  std::size_t n_steps = 10000;
};

struct ExperimentConfig {
  ModelParams params;
  std::size_t n_steps = 10000;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 20240917;
  std::optional<SweepSpec> sweep;
  std::string outputs = "out";
  std::vector<std::string> log_processes = {"qB", "qI", "Y", "nu", "eta", "mtmB", "mtmI"};
  /// "auto", "direct" or "linearized"
  std::string riccati_method = "auto";
  std::size_t band_points = 100;
  std::size_t sample_paths = 10;
  std::optional<PicardSpec> picard;
  std::optional<GateauxSpec> gateaux = GateauxSpec{.cfg = GateauxConfig{.n_paths = 2000}};
};

namespace detail {

inline void reject_unknown(const Json& obj, const std::set<std::string>& known,
                           const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

inline double get_number(const Json& v, const std::string& name) {
  if (!v.is_number()) throw ConfigError(name + " must be a number");
  return v.get<double>();
}

inline std::uint64_t get_unsigned(const Json& v, const std::string& name) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ConfigError(name + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::size_t get_count(const Json& v, const std::string& name) {
  const auto n = get_unsigned(v, name);
  if (n == 0) throw ConfigError(name + " must be positive");
  return static_cast<std::size_t>(n);
}

inline std::string get_string(const Json& v, const std::string& name) {
  if (!v.is_string()) throw ConfigError(name + " must be a string");
  return v.get<std::string>();
}

inline ModelParams parse_params(const Json& j, const std::string& where) {
  std::set<std::string> known;
  for (const auto& [key, _] : param_fields()) known.insert(key);
  reject_unknown(j, known, where);
  ModelParams p;
  for (const auto& [key, member] : param_fields())
    if (j.contains(key)) p.*member = get_number(j.at(key), where + "." + key);
  const auto report = validate_params(p);
  if (const auto* f = report.first_failure()) throw ConfigError(where + ": " + f->message);
  return p;
}

inline Json params_json(const ModelParams& p) {
  Json j = Json::object();
  for (const auto& [key, member] : param_fields()) j[key] = p.*member;
  return j;
}

inline std::vector<double> get_number_list(const Json& v, const std::string& name) {
  if (!v.is_array()) throw ConfigError(name + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(get_number(x, name));
  return out;
}

}  // namespace detail

inline Json to_json(const ModelParams& p) { return detail::params_json(p); }

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["params"] = detail::params_json(c.params);
  j["n_steps"] = c.n_steps;
  j["n_paths"] = c.n_paths;
  j["seed"] = c.seed;
  if (c.sweep)
    j["sweep"] = {{"parameter", c.sweep->parameter}, {"values", c.sweep->values}};
  else
    j["sweep"] = nullptr;
  j["outputs"] = c.outputs;
  j["log_processes"] = c.log_processes;
  j["riccati_method"] = c.riccati_method;
  j["band_points"] = c.band_points;
  j["sample_paths"] = c.sample_paths;
  if (c.picard) {
    const auto& s = c.picard->solver;
    j["picard"] = {{"params", detail::params_json(c.picard->params)},
                   {"n_steps", s.n_steps},
                   {"max_iters", s.max_iters},
                   {"tol", s.tol},
                   {"damping", s.damping}};
  } else {
    j["picard"] = nullptr;
  }
  if (c.gateaux) {
    const auto& g = c.gateaux->cfg;
    j["gateaux"] = {{"epsilon_list", g.epsilon_list},
                    {"n_directions", g.n_directions},
                    {"n_paths", g.n_paths},
                    {"seed", g.seed},
                    {"direction_amplitude", g.direction_amplitude},
                    {"fourier_modes", g.fourier_modes},
                    {"perturbation", g.perturbation},
                    {"n_steps", c.gateaux->n_steps}};
  } else {
    j["gateaux"] = nullptr;
  }
  return j;
}

/// Strict parse: unknown keys and ill-typed values are errors, absent keys
/// take their defaults, null disables the optional sections.
inline ExperimentConfig parse_config(const Json& j) {
  detail::reject_unknown(j,
                         {"params", "n_steps", "n_paths", "seed", "sweep", "outputs",
                          "log_processes", "riccati_method", "band_points", "sample_paths",
                          "picard", "gateaux"},
                         "config");
  ExperimentConfig c;
  if (j.contains("params")) c.params = detail::parse_params(j.at("params"), "params");
  if (j.contains("n_steps")) c.n_steps = detail::get_count(j.at("n_steps"), "n_steps");
  if (j.contains("n_paths")) c.n_paths = detail::get_count(j.at("n_paths"), "n_paths");
  if (j.contains("seed")) c.seed = detail::get_unsigned(j.at("seed"), "seed");
  if (j.contains("outputs")) c.outputs = detail::get_string(j.at("outputs"), "outputs");
  if (j.contains("band_points"))
    c.band_points = detail::get_count(j.at("band_points"), "band_points");
  if (j.contains("sample_paths"))
    c.sample_paths = static_cast<std::size_t>(detail::get_unsigned(j.at("sample_paths"), "sample_paths"));
  if (j.contains("riccati_method")) {
    c.riccati_method = detail::get_string(j.at("riccati_method"), "riccati_method");
    if (c.riccati_method != "auto" && c.riccati_method != "direct" &&
        c.riccati_method != "linearized")
      throw ConfigError("riccati_method must be one of auto, direct, linearized");
  }
  if (j.contains("log_processes")) {
    const auto& v = j.at("log_processes");
    if (!v.is_array()) throw ConfigError("log_processes must be an array of names");
    c.log_processes.clear();
    for (const auto& x : v) {
      const auto name = detail::get_string(x, "log_processes");
      if (!process_from_string(name)) throw ConfigError("unknown process '" + name + "'");
      c.log_processes.push_back(name);
    }
  }
  if (j.contains("sweep") && !j.at("sweep").is_null()) {
    const auto& s = j.at("sweep");
    detail::reject_unknown(s, {"parameter", "values"}, "sweep");
    if (!s.contains("parameter") || !s.contains("values"))
      throw ConfigError("sweep needs 'parameter' and 'values'");
    SweepSpec sw;
    sw.parameter = detail::get_string(s.at("parameter"), "sweep.parameter");
    ModelParams probe;
    if (!param_by_name(probe, sw.parameter))
      throw ConfigError("sweep.parameter '" + sw.parameter + "' is not a model parameter");
    sw.values = detail::get_number_list(s.at("values"), "sweep.values");
    if (sw.values.empty()) throw ConfigError("sweep.values must not be empty");
    for (double v : sw.values) {
      ModelParams q = c.params;
      *param_by_name(q, sw.parameter) = v;
      const auto report = validate_params(q);
      if (const auto* f = report.first_failure()) throw ConfigError("sweep: " + f->message);
    }
    c.sweep = std::move(sw);
  }
  if (j.contains("picard")) {
    const auto& s = j.at("picard");
    if (s.is_null()) {
      c.picard.reset();
    } else {
      detail::reject_unknown(s, {"params", "n_steps", "max_iters", "tol", "damping"}, "picard");
      PicardSpec ps;
      ps.params.sigma_S = ps.params.sigma_alpha = ps.params.sigma_xi = 0.0;
      if (s.contains("params")) {
        // zero-noise defaults, then the given overrides
        Json merged = detail::params_json(ps.params);
        const auto& given = s.at("params");
        if (!given.is_object()) throw ConfigError("picard.params must be a JSON object");
        for (const auto& [key, val] : given.items()) merged[key] = val;
        ps.params = detail::parse_params(merged, "picard.params");
      }
      if (ps.params.sigma_S != 0.0 || ps.params.sigma_alpha != 0.0 || ps.params.sigma_xi != 0.0)
        throw ConfigError("picard.params must be zero-noise (sigma_S = sigma_alpha = sigma_xi = 0)");
      if (s.contains("n_steps")) ps.solver.n_steps = detail::get_count(s.at("n_steps"), "picard.n_steps");
      if (s.contains("max_iters"))
        ps.solver.max_iters = detail::get_count(s.at("max_iters"), "picard.max_iters");
      if (s.contains("tol")) ps.solver.tol = detail::get_number(s.at("tol"), "picard.tol");
      if (s.contains("damping"))
        ps.solver.damping = detail::get_number(s.at("damping"), "picard.damping");
      if (!(ps.solver.tol > 0.0)) throw ConfigError("picard.tol must be > 0");
      if (!(ps.solver.damping > 0.0 && ps.solver.damping <= 1.0))
        throw ConfigError("picard.damping must lie in (0, 1]");
      c.picard = ps;
    }
  }
  if (j.contains("gateaux")) {
    const auto& s = j.at("gateaux");
    if (s.is_null()) {
      c.gateaux.reset();
    } else {
      detail::reject_unknown(s,
                             {"epsilon_list", "n_directions", "n_paths", "seed",
                              "direction_amplitude", "fourier_modes", "perturbation", "n_steps"},
                             "gateaux");
      GateauxSpec gs = ExperimentConfig{}.gateaux.value();
      auto& g = gs.cfg;
      if (s.contains("epsilon_list")) {
        g.epsilon_list = detail::get_number_list(s.at("epsilon_list"), "gateaux.epsilon_list");
        if (g.epsilon_list.empty()) throw ConfigError("gateaux.epsilon_list must not be empty");
        for (double e : g.epsilon_list)
          if (!(e > 0.0)) throw ConfigError("gateaux.epsilon_list entries must be > 0");
      }
      if (s.contains("n_directions"))
        g.n_directions = detail::get_count(s.at("n_directions"), "gateaux.n_directions");
      if (s.contains("n_paths")) {
        g.n_paths = detail::get_count(s.at("n_paths"), "gateaux.n_paths");
        if (g.n_paths < 2) throw ConfigError("gateaux.n_paths must be >= 2");
      }
      if (s.contains("seed")) g.seed = detail::get_unsigned(s.at("seed"), "gateaux.seed");
      if (s.contains("direction_amplitude"))
        g.direction_amplitude = detail::get_number(s.at("direction_amplitude"), "gateaux.direction_amplitude");
      if (s.contains("fourier_modes"))
        g.fourier_modes = detail::get_count(s.at("fourier_modes"), "gateaux.fourier_modes");
      if (s.contains("perturbation"))
        g.perturbation = detail::get_number(s.at("perturbation"), "gateaux.perturbation");
      if (s.contains("n_steps")) gs.n_steps = detail::get_count(s.at("n_steps"), "gateaux.n_steps");
      c.gateaux = gs;
    }
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline SimulationOptions simulation_options(const ExperimentConfig& c) {
  SimulationOptions o;
  o.log_processes.clear();
  for (const auto& name : c.log_processes) o.log_processes.push_back(*process_from_string(name));
  o.band_points = c.band_points;
  o.sample_paths = c.sample_paths;
  return o;
}

inline SolverChoice solver_choice(const ExperimentConfig& c) {
  if (c.riccati_method == "direct") return SolverChoice::direct;
  if (c.riccati_method == "linearized") return SolverChoice::linearized;
  return SolverChoice::automatic;
}

}  // namespace broker_nash
