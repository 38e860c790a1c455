#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "agewise/aoi.hpp"
#include "agewise/policy.hpp"

namespace agewise {

struct Objective {
  enum class Kind { mean, polynomial, violation };
  Kind kind = Kind::mean;
  std::vector<double> coefficients;  // polynomial cost, constant term first
  long long age_limit = 0;           // violation threshold
};

inline double objective_value(const AoiSolution& s, const Objective& o) {
  switch (o.kind) {
    case Objective::Kind::mean:
      return mean_aoi(s);
    case Objective::Kind::polynomial:
      return polynomial_cost(s, o.coefficients);
    case Objective::Kind::violation:
      return violation_probability(s, o.age_limit);
  }
  throw std::logic_error("opt: unknown objective kind");
}

// Number of worker threads for threshold sweeps; AGEWISE_THREADS overrides
// the hardware count.
inline unsigned search_threads() {
  if (const char* env = std::getenv("AGEWISE_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<unsigned>(std::min(v, 256L));
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

namespace opt_detail {

inline void enumerate_suffix(
    std::vector<long long>& tau, std::size_t pos, long long tau_max,
    const std::function<void(const std::vector<long long>&)>& fn) {
  if (pos == tau.size()) {
    fn(tau);
    return;
  }
  // tau_2 may tie with tau_1 (an empty first band); later thresholds
  // strictly increase.
  const long long lo = pos == 1 ? tau[0] : tau[pos - 1] + 1;
  for (long long t = lo; t <= tau_max; ++t) {
    tau[pos] = t;
    enumerate_suffix(tau, pos + 1, tau_max, fn);
  }
}

inline std::uint64_t binomial_u64(long long n, long long k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (long long i = 1; i <= k; ++i) {
    r = r * static_cast<std::uint64_t>(n - k + i) /
        static_cast<std::uint64_t>(i);
  }
  return r;
}

}  // namespace opt_detail

// Streams every admissible threshold tuple (1 <= tau_1 <= tau_2 < tau_3 <
// ... <= tau_max) in lexicographic order.
inline void enumerate_thresholds(
    std::size_t j, long long tau_max,
    const std::function<void(const std::vector<long long>&)>& fn) {
  if (j == 0) throw std::invalid_argument("opt: need at least one threshold");
  if (tau_max < 1) throw std::invalid_argument("opt: tau_max must be >= 1");
  std::vector<long long> tau(j);
  for (long long t1 = 1; t1 <= tau_max; ++t1) {
    tau[0] = t1;
    opt_detail::enumerate_suffix(tau, 1, tau_max, fn);
  }
}

inline std::uint64_t threshold_count(std::size_t j, long long tau_max) {
  if (j == 0) throw std::invalid_argument("opt: need at least one threshold");
  if (tau_max < 1) return 0;
  if (j == 1) return static_cast<std::uint64_t>(tau_max);
  std::uint64_t acc = 0;
  for (long long t2 = 1; t2 <= tau_max; ++t2) {
    acc += static_cast<std::uint64_t>(t2) *
           opt_detail::binomial_u64(tau_max - t2,
                                    static_cast<long long>(j) - 2);
  }
  return acc;
}

// Evaluates every threshold tuple of one ordered server family without
// rebuilding the chain: the slot blocks depend only on (live prefix,
// routed server), so their powers and partial sums up to tau_max are
// precomputed once and each tuple reduces to a handful of vector-matrix
// products.  Results match analyze() to solver roundoff.
class FamilyEvaluator {
 public:
  FamilyEvaluator(std::vector<ServerSpec> servers, long long tau_max,
                  Objective objective)
      : servers_(std::move(servers)),
        tau_max_(tau_max),
        objective_(std::move(objective)) {
    if (servers_.empty()) {
      throw std::invalid_argument("opt: empty server family");
    }
    if (tau_max_ < 1) throw std::invalid_argument("opt: tau_max must be >= 1");
    if (objective_.kind == Objective::Kind::polynomial) {
      if (objective_.coefficients.empty()) {
        throw std::invalid_argument(
            "opt: polynomial objective needs coefficients");
      }
      if (objective_.coefficients.size() > 21) {
        throw std::invalid_argument(
            "opt: polynomial objective degree capped at 20");
      }
    }
    head_degree_ = 1;
    if (objective_.kind == Objective::Kind::polynomial) {
      head_degree_ = static_cast<int>(objective_.coefficients.size()) - 1;
    }

    const std::size_t j = servers_.size();
    const auto off = aoi_detail::phase_offsets(servers_);
    const Eigen::Index total = off.back();
    m_ = 2 * total;
    h_ = ColVec::Zero(m_);
    h_.segment(total, total).setOnes();
    sel_rows_.resize(j);
    for (std::size_t s = 0; s < j; ++s) {
      sel_rows_[s] = RowVec::Zero(m_);
      sel_rows_[s].segment(off[s], servers_[s].service.order()) =
          servers_[s].service.beta();
    }
    means_.resize(j);
    costs_.resize(j);
    for (std::size_t s = 0; s < j; ++s) {
      means_[s] = servers_[s].service.mean();
      costs_[s] = servers_[s].cost;
    }

    combo_index_.assign((j + 1) * j, -1);
    for (std::size_t live = 0; live <= j; ++live) {
      for (long long dr = -1; dr <= 1; ++dr) {
        const long long route = static_cast<long long>(live) + dr;
        if (route < 0 || route >= static_cast<long long>(j)) continue;
        auto& slot = combo_index_[live * j + static_cast<std::size_t>(route)];
        if (slot >= 0) continue;
        slot = static_cast<int>(tables_.size());
        tables_.push_back(build_tables(live, static_cast<std::size_t>(route)));
      }
    }
    final_combo_ = combo_index_[j * j + (j - 1)];
    const Matrix& a_fin = tables_[static_cast<std::size_t>(final_combo_)].a;
    const Matrix eye = Matrix::Identity(m_, m_);
    final_uB_ = linalg::solve_right_mat(
        eye - a_fin, canonical_blocks(servers_, j, j - 1).absorbing);
    final_tail_ = aoi_detail::tail_weight_vectors(a_fin, h_, head_degree_);
  }

  const std::vector<ServerSpec>& servers() const { return servers_; }
  long long tau_max() const { return tau_max_; }
  const Objective& objective() const { return objective_; }

  struct Value {
    bool ok = false;
    double age_cost = std::numeric_limits<double>::infinity();
    double transmission_cost = std::numeric_limits<double>::infinity();
  };

  struct Scratch {
    RowVec v;
    RowVec t;
    RowVec beta;
    RowVec acc;
    Matrix routing;
    std::vector<PlanRegime> plan;
    std::vector<double> heads;
  };

  Value evaluate(const std::vector<long long>& tau, Scratch& sc) const {
    const std::size_t j = servers_.size();
    if (tau.size() != j || tau.back() > tau_max_) {
      throw std::invalid_argument("opt: thresholds incompatible with family");
    }
    sc.plan = chain_plan(tau);
    const long long tau_last = tau.back();

    // Routing matrix over cycle-starting servers, then its stationary law.
    sc.routing.resize(static_cast<Eigen::Index>(j),
                      static_cast<Eigen::Index>(j));
    for (std::size_t row = 0; row < j; ++row) {
      sc.v = sel_rows_[row];
      sc.acc = RowVec::Zero(static_cast<Eigen::Index>(j));
      walk_regimes(
          sc, [&](const Tables& tb, long long /*start*/, long long span) {
            sc.acc.noalias() +=
                sc.v * tb.sum_b[static_cast<std::size_t>(span)];
          });
      sc.acc.noalias() += sc.v * final_uB_;
      sc.routing.row(static_cast<Eigen::Index>(row)) = sc.acc;
    }
    RowVec kappa;
    try {
      kappa = solve_kappa(sc.routing);
    } catch (const std::exception&) {
      return {};
    }

    sc.beta = RowVec::Zero(m_);
    for (std::size_t s = 0; s < j; ++s) {
      if (kappa(static_cast<Eigen::Index>(s)) != 0.0) {
        sc.beta += kappa(static_cast<Eigen::Index>(s)) * sel_rows_[s];
      }
    }

    // Head pass: the cycle-length, wait and moment masses all come from the
    // same per-regime partial-sum tables.
    const long long tau_wait = tau.front();
    double inv_eta = 0.0;
    double wait_mass = 0.0;
    sc.heads.assign(static_cast<std::size_t>(head_degree_) + 1, 0.0);
    double beyond_mass = 0.0;  // violation objective, ages above the limit
    const long long limit = objective_.age_limit;
    sc.v = sc.beta;
    walk_regimes(sc, [&](const Tables& tb, long long start, long long span) {
      const auto d = static_cast<std::size_t>(span);
      const double mass = sc.v.dot(tb.sum_h[d]);
      inv_eta += mass;
      if (start < tau_wait) wait_mass += mass;
      for (int m = 0; m <= head_degree_; ++m) {
        double acc = 0.0;
        for (int q = 0; q <= m; ++q) {
          acc += aoi_detail::binomial(m, q) *
                 std::pow(static_cast<double>(start),
                          static_cast<double>(m - q)) *
                 sc.v.dot(tb.sum_wh[static_cast<std::size_t>(q)][d]);
        }
        sc.heads[static_cast<std::size_t>(m)] += acc;
      }
      if (objective_.kind == Objective::Kind::violation &&
          start + span > limit + 1) {
        const auto lo = static_cast<std::size_t>(
            std::max<long long>(0, limit + 1 - start));
        beyond_mass += mass - sc.v.dot(tb.sum_h[lo]);
      }
    });

    // Tail closed forms from the final regime entry vector sc.v.
    const Tables& fin = tables_[static_cast<std::size_t>(final_combo_)];
    inv_eta += sc.v.dot(final_tail_[0]);
    const double eta = 1.0 / inv_eta;
    std::vector<double> tail_moment(static_cast<std::size_t>(head_degree_) +
                                    1);
    for (int m = 0; m <= head_degree_; ++m) {
      double acc = 0.0;
      for (int q = 0; q <= m; ++q) {
        acc += aoi_detail::binomial(m, q) *
               std::pow(static_cast<double>(tau_last),
                        static_cast<double>(m - q)) *
               sc.v.dot(final_tail_[static_cast<std::size_t>(q)]);
      }
      tail_moment[static_cast<std::size_t>(m)] = acc;
    }

    const double p_wait = eta * wait_mass;
    double weighted_service = 0.0;
    for (std::size_t s = 0; s < j; ++s) {
      weighted_service += kappa(static_cast<Eigen::Index>(s)) * means_[s];
    }
    double transmission = 0.0;
    for (std::size_t s = 0; s < j; ++s) {
      transmission += costs_[s] * (1.0 - p_wait) *
                      kappa(static_cast<Eigen::Index>(s)) / weighted_service;
    }

    double age_cost = 0.0;
    switch (objective_.kind) {
      case Objective::Kind::mean:
        age_cost = eta * (sc.heads[1] + tail_moment[1]);
        break;
      case Objective::Kind::polynomial: {
        for (std::size_t r = 0; r < objective_.coefficients.size(); ++r) {
          age_cost += objective_.coefficients[r] * eta *
                      (sc.heads[r] + tail_moment[r]);
        }
        break;
      }
      case Objective::Kind::violation: {
        double mass = beyond_mass;
        if (limit + 1 <= tau_last) {
          mass += sc.v.dot(final_tail_[0]);
        } else {
          long long e = limit + 1 - tau_last;
          sc.t = sc.v;
          while (e > tau_max_) {
            sc.v.noalias() =
                sc.t * fin.pow[static_cast<std::size_t>(tau_max_)];
            sc.t.swap(sc.v);
            e -= tau_max_;
          }
          sc.v.noalias() = sc.t * fin.pow[static_cast<std::size_t>(e)];
          mass += sc.v.dot(final_tail_[0]);
        }
        age_cost = eta * mass;
        break;
      }
    }
    return {true, age_cost, transmission};
  }

 private:
  struct Tables {
    Matrix a;
    std::vector<Matrix> pow;                  // A^d, d = 0..tau_max
    std::vector<Matrix> sum_b;                // (sum_{l<d} A^l) B
    std::vector<ColVec> sum_h;                // (sum_{l<d} A^l) h
    std::vector<std::vector<ColVec>> sum_wh;  // (sum_{l<d} l^m A^l) h
  };

  Tables build_tables(std::size_t live, std::size_t route) const {
    SlotBlocks blocks = canonical_blocks(servers_, live, route);
    Tables tb;
    tb.a = blocks.transient;
    const auto d_max = static_cast<std::size_t>(tau_max_);
    tb.pow.reserve(d_max + 1);
    tb.sum_b.reserve(d_max + 1);
    tb.sum_h.reserve(d_max + 1);
    tb.sum_wh.assign(static_cast<std::size_t>(head_degree_) + 1, {});
    Matrix p = Matrix::Identity(m_, m_);
    Matrix sb = Matrix::Zero(m_, blocks.absorbing.cols());
    ColVec sh = ColVec::Zero(m_);
    std::vector<ColVec> swh(static_cast<std::size_t>(head_degree_) + 1,
                            ColVec::Zero(m_));
    for (std::size_t d = 0; d <= d_max; ++d) {
      tb.pow.push_back(p);
      tb.sum_b.push_back(sb);
      tb.sum_h.push_back(sh);
      for (int m = 0; m <= head_degree_; ++m) {
        tb.sum_wh[static_cast<std::size_t>(m)].push_back(
            swh[static_cast<std::size_t>(m)]);
      }
      if (d == d_max) break;
      const ColVec ph = p * h_;
      sb.noalias() += p * blocks.absorbing;
      sh += ph;
      double lm = 1.0;
      for (int m = 0; m <= head_degree_; ++m) {
        swh[static_cast<std::size_t>(m)] += lm * ph;
        lm *= static_cast<double>(d);
      }
      p = p * tb.a;
    }
    return tb;
  }

  // Applies fn(tables, start, span) to each finite regime of sc.plan and
  // advances sc.v across it; afterwards sc.v is the entry vector of the
  // final regime.
  template <typename Fn>
  void walk_regimes(Scratch& sc, Fn&& fn) const {
    const std::size_t j = servers_.size();
    for (std::size_t r = 0; r + 1 < sc.plan.size(); ++r) {
      const PlanRegime& reg = sc.plan[r];
      const long long span = sc.plan[r + 1].start - reg.start;
      const Tables& tb = tables_[static_cast<std::size_t>(
          combo_index_[reg.live_servers * j + reg.route])];
      fn(tb, reg.start, span);
      sc.t.noalias() = sc.v * tb.pow[static_cast<std::size_t>(span)];
      sc.v.swap(sc.t);
    }
  }

  std::vector<ServerSpec> servers_;
  long long tau_max_ = 0;
  Objective objective_;
  int head_degree_ = 1;
  Eigen::Index m_ = 0;
  ColVec h_;
  std::vector<RowVec> sel_rows_;
  std::vector<double> means_;
  std::vector<double> costs_;
  std::vector<int> combo_index_;
  std::vector<Tables> tables_;
  int final_combo_ = -1;
  Matrix final_uB_;
  std::vector<ColVec> final_tail_;
};

struct SweepRow {
  std::vector<long long> thresholds;
  bool ok = false;
  double age_cost = 0.0;
  double transmission_cost = 0.0;
};

// Full threshold sweep of one ordered family, rows in enumeration order.
inline std::vector<SweepRow> sweep(const std::vector<ServerSpec>& servers,
                                   long long tau_max,
                                   const Objective& objective) {
  FamilyEvaluator eval(servers, tau_max, objective);
  FamilyEvaluator::Scratch scratch;
  std::vector<SweepRow> rows;
  enumerate_thresholds(servers.size(), tau_max,
                       [&](const std::vector<long long>& tau) {
                         const auto v = eval.evaluate(tau, scratch);
                         rows.push_back(
                             {tau, v.ok, v.age_cost, v.transmission_cost});
                       });
  return rows;
}

struct SearchSpec {
  std::vector<ServerSpec> pool;
  std::size_t max_servers = 2;
  long long tau_max = 200;
  std::vector<double> budgets;
  Objective objective;
  bool order_by_mean = true;  // play subsets slowest server first
};

struct Candidate {
  bool feasible = false;
  double age_cost = std::numeric_limits<double>::infinity();
  double transmission_cost = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pool_servers;  // pool indices in play order
  std::vector<long long> thresholds;
};

// Deterministic total order: feasibility, then age cost, then transmission
// cost, then thresholds, then fewer servers, then pool indices.
inline bool candidate_better(const Candidate& a, const Candidate& b) {
  if (a.feasible != b.feasible) return a.feasible;
  if (!a.feasible) return false;
  if (a.age_cost != b.age_cost) return a.age_cost < b.age_cost;
  if (a.transmission_cost != b.transmission_cost) {
    return a.transmission_cost < b.transmission_cost;
  }
  if (a.thresholds != b.thresholds) return a.thresholds < b.thresholds;
  if (a.pool_servers.size() != b.pool_servers.size()) {
    return a.pool_servers.size() < b.pool_servers.size();
  }
  return a.pool_servers < b.pool_servers;
}

struct BudgetOutcome {
  double budget = 0.0;
  Candidate best;  // infeasible marker when no policy fits the budget
};

struct SearchResult {
  std::vector<BudgetOutcome> outcomes;  // in the caller's budget order
};

namespace opt_detail {

// Per-thread slice of one family's threshold sweep: each worker owns the
// tuples whose first threshold is congruent to its index and keeps its own
// per-budget incumbents, merged deterministically afterwards.  The bests
// array is sorted by budget, so an incumbent at one budget is always at
// least as good at every larger budget; that ordering justifies the early
// exit in the update walk.
inline void sweep_slice(const FamilyEvaluator& eval,
                        const std::vector<std::size_t>& play_order,
                        const std::vector<double>& sorted_budgets,
                        long long first, unsigned stride,
                        std::vector<Candidate>& bests) {
  FamilyEvaluator::Scratch scratch;
  const std::size_t j = eval.servers().size();
  std::vector<long long> tau(j);
  const auto consider = [&](const std::vector<long long>& t) {
    const auto v = eval.evaluate(t, scratch);
    if (!v.ok) return;
    const auto it = std::lower_bound(sorted_budgets.begin(),
                                     sorted_budgets.end(),
                                     v.transmission_cost);
    Candidate cand{true, v.age_cost, v.transmission_cost, play_order, t};
    for (auto i = static_cast<std::size_t>(it - sorted_budgets.begin());
         i < bests.size(); ++i) {
      if (!candidate_better(cand, bests[i])) break;
      bests[i] = cand;
    }
  };
  for (long long t1 = first; t1 <= eval.tau_max();
       t1 += static_cast<long long>(stride)) {
    tau[0] = t1;
    if (j == 1) {
      consider(tau);
    } else {
      enumerate_suffix(tau, 1, eval.tau_max(), consider);
    }
  }
}

}  // namespace opt_detail

// Budget-constrained exhaustive search over server subsets and threshold
// tuples: for every budget, the feasible policy (transmission cost within
// budget) with the smallest age cost, under the deterministic tie-break of
// candidate_better.  Results do not depend on the worker count.
inline SearchResult optimize(const SearchSpec& spec) {
  if (spec.pool.empty()) throw std::invalid_argument("opt: empty server pool");
  if (spec.budgets.empty()) {
    throw std::invalid_argument("opt: at least one budget required");
  }
  if (spec.max_servers < 1) {
    throw std::invalid_argument("opt: max_servers must be >= 1");
  }
  std::vector<double> sorted_budgets = spec.budgets;
  std::sort(sorted_budgets.begin(), sorted_budgets.end());
  std::vector<Candidate> bests(sorted_budgets.size());

  const std::size_t pool_size = spec.pool.size();
  const std::size_t max_servers = std::min(spec.max_servers, pool_size);
  std::vector<std::size_t> subset;
  const std::function<void(std::size_t)> descend = [&](std::size_t next) {
    if (!subset.empty()) {
      std::vector<std::size_t> play_order = subset;
      if (spec.order_by_mean) {
        std::stable_sort(play_order.begin(), play_order.end(),
                         [&](std::size_t a, std::size_t b) {
                           return spec.pool[a].service.mean() >
                                  spec.pool[b].service.mean();
                         });
      }
      std::vector<ServerSpec> family;
      family.reserve(play_order.size());
      for (std::size_t i : play_order) family.push_back(spec.pool[i]);
      FamilyEvaluator eval(family, spec.tau_max, spec.objective);

      const unsigned workers = std::min<unsigned>(
          search_threads(),
          static_cast<unsigned>(std::max<long long>(1, spec.tau_max)));
      std::vector<std::vector<Candidate>> local(
          workers, std::vector<Candidate>(sorted_budgets.size()));
      if (workers == 1) {
        opt_detail::sweep_slice(eval, play_order, sorted_budgets, 1, 1,
                                local[0]);
      } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
          pool.emplace_back([&, w] {
            opt_detail::sweep_slice(eval, play_order, sorted_budgets,
                                    static_cast<long long>(w) + 1, workers,
                                    local[w]);
          });
        }
        for (auto& th : pool) th.join();
      }
      for (const auto& lb : local) {
        for (std::size_t i = 0; i < bests.size(); ++i) {
          if (candidate_better(lb[i], bests[i])) bests[i] = lb[i];
        }
      }
    }
    for (std::size_t i = next; i < pool_size; ++i) {
      if (subset.size() == max_servers) break;
      subset.push_back(i);
      descend(i + 1);
      subset.pop_back();
    }
  };
  descend(0);

  SearchResult result;
  result.outcomes.reserve(spec.budgets.size());
  for (double b : spec.budgets) {
    const auto i = static_cast<std::size_t>(
        std::lower_bound(sorted_budgets.begin(), sorted_budgets.end(), b) -
        sorted_budgets.begin());
    result.outcomes.push_back({b, bests[i]});
  }
  return result;
}

}  // namespace agewise
