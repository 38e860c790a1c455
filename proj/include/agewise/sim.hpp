#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "agewise/aoi.hpp"
#include "agewise/policy.hpp"
#include "agewise/rng.hpp"

namespace agewise {

struct SimConfig {
  Policy policy;
  long long slots = 0;        // simulated slots, warmup included
  std::uint64_t seed = 1;
  long long warmup = 10000;   // leading slots excluded from statistics
  std::optional<std::vector<long long>> scripted_services;
  bool record_trace = false;  // capture the per-slot AoI sample path
};

struct SimResult {
  std::vector<long long> histogram;  // histogram[n] = slots with AoI == n
  long long counted_slots = 0;
  long long cycles = 0;              // deliveries inside the counting window
  std::vector<long long> starts;     // transmission starts per server
  double mean_aoi = 0.0;
  double p_wait = 0.0;
  std::vector<double> frequency;     // starts / counted slots
  double transmission_cost = 0.0;
  std::vector<long long> trace;      // per-slot AoI when record_trace is set
};

// Slot-accurate reference simulation.  Each slot processes, in order:
// (1) completion of an in-flight update, (2) the AoI update (drop to the
// delivered packet's system time on completion, otherwise increment),
// (3) the transmission decision: wait below tau_1, otherwise start on the
// server whose half-open band contains the current AoI.  The AoI starts at
// one with no packet in flight.
inline SimResult simulate(const SimConfig& cfg) {
  if (cfg.slots < 1) throw std::invalid_argument("sim: slots must be >= 1");
  if (cfg.slots > (1LL << 40)) {
    throw std::invalid_argument("sim: horizon overflow");
  }
  if (cfg.warmup < 0 || cfg.warmup >= cfg.slots) {
    throw std::invalid_argument("sim: warmup must lie inside the horizon");
  }
  if (cfg.scripted_services) {
    for (long long d : *cfg.scripted_services) {
      if (d < 1) {
        throw std::invalid_argument("sim: scripted durations must be >= 1");
      }
    }
  }

  const Policy& p = cfg.policy;
  const long long tau_wait = p.wait_threshold();
  SplitMix64 rng(cfg.seed);

  SimResult res;
  res.starts.assign(p.server_count(), 0);
  res.histogram.assign(64, 0);
  if (cfg.record_trace) {
    res.trace.reserve(static_cast<std::size_t>(cfg.slots));
  }

  bool in_flight = false;
  long long generated_at = 0;   // transmission slot of the in-flight packet
  long long completes_at = 0;
  long long age = 0;            // AoI of the previous slot; slot 0 sees age 1
  std::size_t next_script = 0;

  for (long long k = 0; k < cfg.slots; ++k) {
    const bool counted = k >= cfg.warmup;
    if (in_flight && k == completes_at) {
      in_flight = false;
      age = k - generated_at;
      if (counted) ++res.cycles;
    } else {
      ++age;
    }
    if (!in_flight && age >= tau_wait) {
      const std::size_t j = p.server_for_age(age);
      long long duration;
      if (cfg.scripted_services) {
        if (next_script >= cfg.scripted_services->size()) {
          throw std::runtime_error("sim: scripted services exhausted");
        }
        duration = (*cfg.scripted_services)[next_script++];
      } else {
        duration = p.servers()[j].service.sample(rng);
      }
      // A duration reaching past the horizon never completes inside the
      // run; capping it keeps completes_at from overflowing.
      if (duration > cfg.slots + 1) duration = cfg.slots + 1;
      generated_at = k;
      completes_at = k + duration;
      in_flight = true;
      if (counted) ++res.starts[j];
    }
    if (counted) {
      if (age >= static_cast<long long>(res.histogram.size())) {
        res.histogram.resize(static_cast<std::size_t>(
            std::max<long long>(age + 1, 2 * static_cast<long long>(
                                                 res.histogram.size()))));
      }
      ++res.histogram[static_cast<std::size_t>(age)];
    }
    if (cfg.record_trace) res.trace.push_back(age);
  }

  while (!res.histogram.empty() && res.histogram.back() == 0) {
    res.histogram.pop_back();
  }
  res.counted_slots = cfg.slots - cfg.warmup;
  double sum = 0.0;
  long long wait_slots = 0;
  for (std::size_t n = 0; n < res.histogram.size(); ++n) {
    sum += static_cast<double>(n) * static_cast<double>(res.histogram[n]);
    if (static_cast<long long>(n) < tau_wait) wait_slots += res.histogram[n];
  }
  res.mean_aoi = sum / static_cast<double>(res.counted_slots);
  res.p_wait =
      static_cast<double>(wait_slots) / static_cast<double>(res.counted_slots);
  res.frequency.resize(p.server_count());
  for (std::size_t j = 0; j < p.server_count(); ++j) {
    res.frequency[j] = static_cast<double>(res.starts[j]) /
                       static_cast<double>(res.counted_slots);
    res.transmission_cost += p.servers()[j].cost * res.frequency[j];
  }
  return res;
}

// Total variation distance between the empirical AoI distribution and the
// analytic one.  The analytic mass beyond the histogram support enters the
// distance directly (the empirical mass there is zero); a support so short
// that this tail alone could dominate a percent-level comparison is
// rejected instead of silently compared.
inline double tv_distance(const SimResult& sim, const AoiSolution& sol) {
  const long long n_max =
      static_cast<long long>(sim.histogram.size()) - 1;
  if (n_max < 1) throw std::invalid_argument("sim: empty histogram");
  const double analytic_tail = violation_probability(sol, n_max);
  if (analytic_tail > 1e-3) {
    throw std::invalid_argument(
        "sim: histogram support does not cover the analytic distribution");
  }
  const std::vector<double> pmf = aoi_pmf_range(sol, n_max);
  double acc = 0.0;
  const double total = static_cast<double>(sim.counted_slots);
  for (long long n = 1; n <= n_max; ++n) {
    const double empirical =
        static_cast<double>(sim.histogram[static_cast<std::size_t>(n)]) /
        total;
    acc += std::abs(empirical - pmf[static_cast<std::size_t>(n - 1)]);
  }
  return 0.5 * acc + 0.5 * analytic_tail;
}

struct EmpiricalCosts {
  double age_cost = 0.0;
  double transmission_cost = 0.0;
};

// Time-average age cost (under f, by default the age itself) and
// transmission cost per slot under the supplied per-server unit costs.
inline EmpiricalCosts empirical_costs(
    const SimResult& sim, const std::vector<double>& unit_costs,
    const std::function<double(long long)>& f = nullptr) {
  if (unit_costs.size() != sim.starts.size()) {
    throw std::invalid_argument("sim: one unit cost per server required");
  }
  EmpiricalCosts out;
  const double total = static_cast<double>(sim.counted_slots);
  for (std::size_t n = 0; n < sim.histogram.size(); ++n) {
    if (sim.histogram[n] == 0) continue;
    const double value =
        f ? f(static_cast<long long>(n)) : static_cast<double>(n);
    out.age_cost += value * static_cast<double>(sim.histogram[n]) / total;
  }
  for (std::size_t j = 0; j < unit_costs.size(); ++j) {
    out.transmission_cost +=
        unit_costs[j] * static_cast<double>(sim.starts[j]) / total;
  }
  return out;
}

}  // namespace agewise
