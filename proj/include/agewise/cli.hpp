#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "agewise/aoi.hpp"
#include "agewise/config.hpp"
#include "agewise/csv.hpp"
#include "agewise/opt.hpp"
#include "agewise/sim.hpp"

namespace agewise::cli {

struct RunOptions {
  std::string out_dir = ".";
  std::string configs_dir = "configs";  // shipped experiment bundles
  std::optional<long long> slots_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<long long> tau_max_override;
  bool write_sweep = false;
};

namespace cli_detail {

inline const Policy& require_policy(const ExperimentConfig& cfg) {
  if (!cfg.policy) {
    throw std::runtime_error("cli: this command requires a policy section");
  }
  return *cfg.policy;
}

inline std::string out_path(const RunOptions& opt, const std::string& name) {
  std::filesystem::create_directories(opt.out_dir);
  return (std::filesystem::path(opt.out_dir) / name).string();
}

// P(AoI = n) for n = 1, 2, ... until the remaining tail drops below
// tail_tol; the analytic pmf sums to one, so the tail is one minus the
// running total.
inline std::vector<double> full_pmf(const AoiSolution& s, double tail_tol) {
  std::vector<double> out;
  RowVec v = s.chain.beta();
  std::size_t r = 0;
  const auto& tau = s.chain.thresholds();
  const long long tau_last = tau.empty() ? 1 : tau.back();
  double cum = 0.0;
  for (long long n = 0;; ++n) {
    if (r < tau.size() && n >= tau[r]) ++r;
    v = v * s.chain.transients()[r];
    const double p = s.eta * v.dot(s.h);
    out.push_back(p);
    cum += p;
    if (n + 1 >= tau_last && 1.0 - cum <= tail_tol) break;
    if (n > 100000000LL) {
      throw std::runtime_error("cli: pmf tail failed to converge");
    }
  }
  return out;
}

inline std::vector<std::string> summary_header(std::size_t servers) {
  std::vector<std::string> header{"mean_aoi", "p_wait"};
  for (std::size_t j = 1; j <= servers; ++j) {
    header.push_back("f_" + std::to_string(j));
  }
  header.push_back("C_T");
  return header;
}

inline std::string join_names(const std::vector<ServerSpec>& servers) {
  std::string out;
  for (std::size_t i = 0; i < servers.size(); ++i) {
    if (i > 0) out += ' ';
    out += servers[i].name;
  }
  return out;
}

inline std::string join_thresholds(const std::vector<long long>& tau) {
  std::string out;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(tau[i]);
  }
  return out;
}

inline SimConfig sim_config(const ExperimentConfig& cfg,
                            const RunOptions& opt) {
  SimConfig sc{cli_detail::require_policy(cfg),
               opt.slots_override ? *opt.slots_override : cfg.sim.slots,
               opt.seed_override ? *opt.seed_override : cfg.sim.seed,
               cfg.sim.warmup,
               cfg.sim.scripted_services,
               false};
  if (sc.warmup >= sc.slots) sc.warmup = 0;
  return sc;
}

inline long long resolve_tau_max(const ExperimentConfig& cfg,
                                 const RunOptions& opt) {
  if (opt.tau_max_override) return *opt.tau_max_override;
  if (cfg.search) return cfg.search->tau_max;
  return 200;
}

inline Objective resolve_objective(const ExperimentConfig& cfg) {
  if (cfg.search) return cfg.search->objective;
  if (cfg.objective.custom_table) {
    throw std::runtime_error(
        "cli: a custom-table objective cannot drive a threshold sweep");
  }
  return cfg.objective.objective;
}

}  // namespace cli_detail

// pmf.csv (n, probability) and costs.csv (operating statistics plus the
// configured age cost).
inline void run_analyze(const ExperimentConfig& cfg, const RunOptions& opt) {
  const Policy& policy = cli_detail::require_policy(cfg);
  const AoiSolution sol = analyze(policy);

  const std::vector<double> pmf = cli_detail::full_pmf(sol, 1e-10);
  std::vector<csv::Row> rows;
  rows.reserve(pmf.size());
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    rows.push_back({static_cast<long long>(i) + 1, pmf[i]});
  }
  csv::write_csv(cli_detail::out_path(opt, "pmf.csv"), {"n", "probability"},
                 rows);

  std::vector<std::string> header =
      cli_detail::summary_header(policy.server_count());
  header.push_back("C_A");
  csv::Row row{sol.mean, sol.p_wait};
  for (double f : sol.frequency) row.push_back(f);
  row.push_back(sol.transmission_cost);
  row.push_back(objective_config_value(sol, cfg.objective));
  csv::write_csv(cli_detail::out_path(opt, "costs.csv"), header, {row});
}

// sim.csv (n, count, probability) and sim_summary.csv (one row of
// operating statistics).
inline void run_simulate(const ExperimentConfig& cfg, const RunOptions& opt) {
  const SimConfig sc = cli_detail::sim_config(cfg, opt);
  const SimResult res = simulate(sc);

  std::vector<csv::Row> rows;
  for (std::size_t n = 1; n < res.histogram.size(); ++n) {
    rows.push_back({static_cast<long long>(n), res.histogram[n],
                    static_cast<double>(res.histogram[n]) /
                        static_cast<double>(res.counted_slots)});
  }
  csv::write_csv(cli_detail::out_path(opt, "sim.csv"),
                 {"n", "count", "probability"}, rows);

  csv::Row row{res.mean_aoi, res.p_wait};
  for (double f : res.frequency) row.push_back(f);
  row.push_back(res.transmission_cost);
  csv::write_csv(cli_detail::out_path(opt, "sim_summary.csv"),
                 cli_detail::summary_header(sc.policy.server_count()), {row});
}

// optimize.csv (one row per budget) and, with write_sweep and a configured
// policy, sweep.csv over that policy's family.
inline void run_optimize(const ExperimentConfig& cfg, const RunOptions& opt) {
  if (!cfg.search) {
    throw std::runtime_error("cli: optimize requires a search section");
  }
  SearchSpec spec = *cfg.search;
  if (opt.tau_max_override) spec.tau_max = *opt.tau_max_override;

  const SearchResult result = optimize(spec);
  std::vector<csv::Row> rows;
  for (const BudgetOutcome& o : result.outcomes) {
    const Candidate& c = o.best;
    std::string names;
    for (std::size_t i = 0; i < c.pool_servers.size(); ++i) {
      if (i > 0) names += ' ';
      names += spec.pool[c.pool_servers[i]].name;
    }
    rows.push_back({o.budget, names, cli_detail::join_thresholds(c.thresholds),
                    c.age_cost, c.transmission_cost,
                    static_cast<long long>(c.feasible ? 1 : 0)});
  }
  csv::write_csv(cli_detail::out_path(opt, "optimize.csv"),
                 {"budget", "policy", "thresholds", "C_A", "C_T", "feasible"},
                 rows);

  if (opt.write_sweep) {
    const Policy& policy = cli_detail::require_policy(cfg);
    const auto table = sweep(policy.servers(), spec.tau_max, spec.objective);
    std::vector<csv::Row> sweep_rows;
    sweep_rows.reserve(table.size());
    for (const SweepRow& r : table) {
      sweep_rows.push_back({cli_detail::join_thresholds(r.thresholds),
                            r.age_cost, r.transmission_cost,
                            static_cast<long long>(r.ok ? 1 : 0)});
    }
    csv::write_csv(cli_detail::out_path(opt, "sweep.csv"),
                   {"thresholds", "C_A", "C_T", "ok"}, sweep_rows);
  }
}

namespace cli_detail {

inline ExperimentConfig load_bundle(const RunOptions& opt,
                                    const std::string& name) {
  return parse_config(
      (std::filesystem::path(opt.configs_dir) / name).string());
}

inline void reproduce_trace(const RunOptions& opt) {
  ExperimentConfig cfg = load_bundle(opt, "scripted_replay.json");
  SimConfig sc{require_policy(cfg),
               opt.slots_override ? *opt.slots_override : cfg.sim.slots,
               cfg.sim.seed,
               0,
               cfg.sim.scripted_services,
               true};
  const SimResult res = simulate(sc);
  std::vector<csv::Row> rows;
  for (std::size_t k = 0; k < res.trace.size(); ++k) {
    rows.push_back({static_cast<long long>(k), res.trace[k]});
  }
  csv::write_csv(out_path(opt, "trace.csv"), {"slot", "aoi"}, rows);
}

inline void reproduce_validation(const RunOptions& opt) {
  const char* bundles[] = {"validation_m1_g.json", "validation_m1_u.json",
                           "validation_g_u.json", "validation_m1_g_u.json"};
  std::vector<csv::Row> rows;
  for (const char* bundle : bundles) {
    ExperimentConfig cfg = load_bundle(opt, bundle);
    const Policy& policy = require_policy(cfg);
    const AoiSolution sol = analyze(policy);
    const std::vector<double> pmf = full_pmf(sol, 1e-8);
    const SimResult res = simulate(sim_config(cfg, opt));
    const std::string label = join_names(policy.servers()) + " (" +
                              join_thresholds(policy.thresholds()) + ")";
    const double total = static_cast<double>(res.counted_slots);
    for (std::size_t i = 0; i < pmf.size(); ++i) {
      const std::size_t n = i + 1;
      const double empirical =
          n < res.histogram.size()
              ? static_cast<double>(res.histogram[n]) / total
              : 0.0;
      rows.push_back(
          {label, static_cast<long long>(n), pmf[i], empirical});
    }
  }
  csv::write_csv(out_path(opt, "validation.csv"),
                 {"policy", "n", "analytic", "simulated"}, rows);
}

inline void reproduce_tradeoff(const RunOptions& opt) {
  ExperimentConfig cfg = load_bundle(opt, "tradeoff_m1_g.json");
  const Policy& policy = require_policy(cfg);
  const long long tau_max =
      opt.tau_max_override
          ? *opt.tau_max_override
          : (cfg.search ? cfg.search->tau_max : 200);
  Objective mean_objective;
  FamilyEvaluator eval(policy.servers(), tau_max, mean_objective);
  FamilyEvaluator::Scratch scratch;
  std::vector<csv::Row> rows;
  for (long long tau1 : {8LL, 16LL, 32LL, 64LL}) {
    for (long long tau2 = tau1; tau2 <= tau_max; ++tau2) {
      const auto v = eval.evaluate({tau1, tau2}, scratch);
      if (!v.ok) continue;
      rows.push_back({tau1, tau2, v.age_cost, v.transmission_cost});
    }
  }
  csv::write_csv(out_path(opt, "tradeoff.csv"), {"tau1", "tau2", "C_A", "C_T"},
                 rows);
}

}  // namespace cli_detail

// Regenerates the data table behind one of the shipped experiments.
inline void run_reproduce(const std::string& experiment,
                          const RunOptions& opt) {
  if (experiment == "trace") {
    cli_detail::reproduce_trace(opt);
  } else if (experiment == "validation") {
    cli_detail::reproduce_validation(opt);
  } else if (experiment == "tradeoff") {
    cli_detail::reproduce_tradeoff(opt);
  } else {
    throw std::runtime_error("cli: unknown experiment '" + experiment +
                             "' (expected trace, validation, or tradeoff)");
  }
}

}  // namespace agewise::cli
