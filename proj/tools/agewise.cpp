#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "agewise/cli.hpp"

namespace {

int fail(const std::string& message) {
  std::cerr << nlohmann::json{{"error", message}}.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Exact stationary AoI analysis, slot-accurate simulation and "
      "budget-constrained threshold optimization for multi-server "
      "status-update systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::string experiment;
  std::string configs_dir = "configs";
  if (const char* env = std::getenv("AGEWISE_CONFIGS")) configs_dir = env;
  std::optional<long long> slots;
  std::optional<std::uint64_t> seed;
  std::optional<long long> tau_max;
  bool write_sweep = false;

  CLI::App* analyze = app.add_subcommand(
      "analyze", "Compute the exact AoI pmf and operating costs of a policy");
  analyze->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  analyze->add_option("--out", out_dir, "Output directory");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "Run the slot-accurate reference simulation of a policy");
  simulate->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  simulate->add_option("--slots", slots, "Override the simulated horizon");
  simulate->add_option("--seed", seed, "Override the simulation seed");
  simulate->add_option("--out", out_dir, "Output directory");

  CLI::App* optimize = app.add_subcommand(
      "optimize",
      "Exhaustive budget-constrained threshold search over a server pool");
  optimize->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  optimize->add_option("--tau-max", tau_max, "Override the threshold cap");
  optimize->add_flag("--sweep", write_sweep,
                     "Also write the full threshold sweep of the configured "
                     "policy family");
  optimize->add_option("--out", out_dir, "Output directory");

  CLI::App* reproduce = app.add_subcommand(
      "reproduce", "Regenerate a shipped experiment's data table");
  reproduce
      ->add_option("experiment", experiment,
                   "Which experiment (trace, validation, tradeoff)")
      ->required();
  reproduce->add_option("--configs", configs_dir,
                        "Directory holding the shipped configs");
  reproduce->add_option("--slots", slots, "Override simulation horizons");
  reproduce->add_option("--tau-max", tau_max, "Override sweep caps");
  reproduce->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail(e.what());
  }

  agewise::cli::RunOptions opt;
  opt.out_dir = out_dir;
  opt.configs_dir = configs_dir;
  opt.slots_override = slots;
  opt.seed_override = seed;
  opt.tau_max_override = tau_max;
  opt.write_sweep = write_sweep;

  try {
    if (analyze->parsed()) {
      agewise::cli::run_analyze(agewise::parse_config(config_path), opt);
    } else if (simulate->parsed()) {
      agewise::cli::run_simulate(agewise::parse_config(config_path), opt);
    } else if (optimize->parsed()) {
      agewise::cli::run_optimize(agewise::parse_config(config_path), opt);
    } else if (reproduce->parsed()) {
      agewise::cli::run_reproduce(experiment, opt);
    }
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  return 0;
}
