#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "broker_nash/commands.hpp"

using namespace broker_nash;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> paths;
  std::optional<std::uint64_t> steps;
};

/// Command-line flags are merged into the JSON before the strict parse, so
/// they go through the same validation as file values.
ExperimentConfig resolve(const Overrides& o) {
  Json j = Json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError("cannot open config file " + o.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      j = Json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
  }
  if (o.out) j["outputs"] = *o.out;
  if (o.seed) j["seed"] = *o.seed;
  if (o.paths) j["n_paths"] = *o.paths;
  if (o.steps) j["n_steps"] = *o.steps;
  return parse_config(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-form broker / informed-trader Nash equilibrium: solve, verify, simulate"};
  app.require_subcommand(1);
  Overrides o;
  const auto add_flags = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON experiment config (defaults if omitted)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--paths", o.paths, "number of Monte Carlo paths");
    sub->add_option("--steps", o.steps, "number of time steps");
  };
  auto* solve = app.add_subcommand("solve", "solve the Riccati and offset equations");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo simulation of the equilibrium");
  auto* verify = app.add_subcommand("verify", "run the numerical oracle checks");
  auto* sweep = app.add_subcommand("sweep", "one-dimensional parameter sweep");
  for (auto* sub : {solve, simulate, verify, sweep}) add_flags(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kConfigError;
  }

  ExperimentConfig cfg;
  try {
    cfg = resolve(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  if (solve->parsed()) return cmd_solve(cfg, std::cerr);
  if (simulate->parsed()) return cmd_simulate(cfg, std::cerr);
  if (verify->parsed()) return cmd_verify(cfg, std::cerr);
  return cmd_sweep(cfg, std::cerr);
}
