#include <catch2/catch_amalgamated.hpp>

#include <agewise/opt.hpp>
#include <agewise/sim.hpp>

#include <cmath>
#include <cstdlib>
#include <vector>

using agewise::analyze;
using agewise::Dph;
using agewise::FamilyEvaluator;
using agewise::Objective;
using agewise::Policy;
using agewise::SearchSpec;
using agewise::ServerSpec;

namespace {

ServerSpec m1_server() {
  return {"m1", Dph::mixed_geometric(0.01, 0.05, 0.5, 0.5), 10.0};
}

ServerSpec g_server() { return {"g", Dph::geometric(1.0 / 30.0), 100.0}; }

ServerSpec u_server(double cost = 500.0) {
  std::vector<double> mass(18, 0.0);
  for (int v = 12; v <= 18; ++v) mass[v - 1] = 1.0 / 7.0;
  return {"u", Dph::from_bounded_pmf(mass), cost};
}

std::vector<std::vector<long long>> collect(std::size_t j, long long tau_max) {
  std::vector<std::vector<long long>> out;
  agewise::enumerate_thresholds(
      j, tau_max, [&](const std::vector<long long>& tau) {
        out.push_back(tau);
      });
  return out;
}

}  // namespace

TEST_CASE("threshold enumeration order and count", "[opt]") {
  SECTION("single server") {
    const auto tuples = collect(1, 3);
    REQUIRE(tuples.size() == 3);
    CHECK(tuples[0] == std::vector<long long>{1});
    CHECK(tuples[1] == std::vector<long long>{2});
    CHECK(tuples[2] == std::vector<long long>{3});
  }

  SECTION("two servers admit a tie in the first two thresholds") {
    const auto tuples = collect(2, 3);
    REQUIRE(tuples.size() == 6);
    CHECK(tuples[0] == std::vector<long long>{1, 1});
    CHECK(tuples[1] == std::vector<long long>{1, 2});
    CHECK(tuples[2] == std::vector<long long>{1, 3});
    CHECK(tuples[3] == std::vector<long long>{2, 2});
    CHECK(tuples[4] == std::vector<long long>{2, 3});
    CHECK(tuples[5] == std::vector<long long>{3, 3});
  }

  SECTION("the closed-form count matches the enumeration") {
    const auto tuples = collect(3, 6);
    CHECK(tuples.size() == agewise::threshold_count(3, 6));
    CHECK(tuples.size() == 35);
    for (std::size_t i = 1; i < tuples.size(); ++i) {
      CHECK(tuples[i - 1] < tuples[i]);
    }
    for (const auto& tau : tuples) {
      CHECK(tau[0] >= 1);
      CHECK(tau[1] >= tau[0]);
      CHECK(tau[2] > tau[1]);
      CHECK(tau[2] <= 6);
    }
  }

  SECTION("frozen counts at the search scales") {
    CHECK(agewise::threshold_count(1, 60) == 60);
    CHECK(agewise::threshold_count(2, 60) == 1830);
    CHECK(agewise::threshold_count(3, 60) == 35990);
    CHECK(agewise::threshold_count(3, 200) == 1333300);
    CHECK(agewise::threshold_count(4, 5) == 15);
    CHECK(collect(4, 5).size() == 15);
  }

  CHECK_THROWS_AS(agewise::threshold_count(0, 5), std::invalid_argument);
  CHECK_THROWS_AS(agewise::enumerate_thresholds(0, 5, [](const auto&) {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(agewise::enumerate_thresholds(2, 0, [](const auto&) {}),
                  std::invalid_argument);
}

TEST_CASE("the family evaluator matches the full analysis", "[opt]") {
  const std::vector<ServerSpec> family{m1_server(), g_server()};
  const FamilyEvaluator eval(family, 25, {});
  FamilyEvaluator::Scratch scratch;

  agewise::enumerate_thresholds(
      2, 25, [&](const std::vector<long long>& tau) {
        const auto v = eval.evaluate(tau, scratch);
        REQUIRE(v.ok);
        const auto s = analyze(Policy(family, tau));
        CHECK(std::abs(v.age_cost - s.mean) <= 1e-10 * (1.0 + s.mean));
        CHECK(std::abs(v.transmission_cost - s.transmission_cost) <=
              1e-10 * (1.0 + s.transmission_cost));
      });
}

TEST_CASE("the evaluator handles one server and three servers", "[opt]") {
  FamilyEvaluator::Scratch scratch;

  SECTION("single server") {
    const std::vector<ServerSpec> family{g_server()};
    const FamilyEvaluator eval(family, 40, {});
    for (long long t : {1LL, 7LL, 40LL}) {
      const auto v = eval.evaluate({t}, scratch);
      REQUIRE(v.ok);
      const auto s = analyze(Policy(family, {t}));
      CHECK(v.age_cost == Catch::Approx(s.mean).epsilon(1e-10));
      CHECK(v.transmission_cost ==
            Catch::Approx(s.transmission_cost).epsilon(1e-10));
    }
  }

  SECTION("three servers") {
    const std::vector<ServerSpec> family{m1_server(), g_server(), u_server()};
    const FamilyEvaluator eval(family, 30, {});
    const std::vector<std::vector<long long>> tuples{
        {5, 10, 20}, {1, 1, 2}, {3, 3, 9}, {10, 20, 30}, {1, 2, 3}};
    for (const auto& tau : tuples) {
      const auto v = eval.evaluate(tau, scratch);
      REQUIRE(v.ok);
      const auto s = analyze(Policy(family, tau));
      CHECK(v.age_cost == Catch::Approx(s.mean).epsilon(1e-10));
      CHECK(v.transmission_cost ==
            Catch::Approx(s.transmission_cost).epsilon(1e-10));
    }
  }

  SECTION("invalid tuples are rejected") {
    const std::vector<ServerSpec> family{m1_server(), g_server()};
    const FamilyEvaluator eval(family, 25, {});
    CHECK_THROWS_AS(eval.evaluate({5}, scratch), std::invalid_argument);
    CHECK_THROWS_AS(eval.evaluate({5, 26}, scratch), std::invalid_argument);
  }
}

TEST_CASE("evaluator objectives beyond the mean", "[opt]") {
  const std::vector<ServerSpec> family{m1_server(), g_server()};
  FamilyEvaluator::Scratch scratch;

  SECTION("polynomial cost") {
    Objective obj;
    obj.kind = Objective::Kind::polynomial;
    obj.coefficients = {1.0, 0.5, 0.25, 0.125};
    const FamilyEvaluator eval(family, 25, obj);
    for (const auto& tau :
         std::vector<std::vector<long long>>{{10, 20}, {3, 3}, {1, 25}}) {
      const auto v = eval.evaluate(tau, scratch);
      REQUIRE(v.ok);
      const auto s = analyze(Policy(family, tau));
      CHECK(v.age_cost ==
            Catch::Approx(agewise::polynomial_cost(s, obj.coefficients))
                .epsilon(1e-9));
    }
  }

  SECTION("violation probability, limit inside and beyond the bands") {
    for (long long limit : {5LL, 15LL, 20LL, 60LL}) {
      Objective obj;
      obj.kind = Objective::Kind::violation;
      obj.age_limit = limit;
      const FamilyEvaluator eval(family, 25, obj);
      const auto v = eval.evaluate({10, 20}, scratch);
      REQUIRE(v.ok);
      const auto s = analyze(Policy(family, {10, 20}));
      CHECK(v.age_cost ==
            Catch::Approx(agewise::violation_probability(s, limit))
                .margin(1e-12));
    }
  }

  SECTION("objective dispatch") {
    const auto s = analyze(Policy(family, {10, 20}));
    Objective mean;
    CHECK(agewise::objective_value(s, mean) == s.mean);
    Objective poly;
    poly.kind = Objective::Kind::polynomial;
    poly.coefficients = {0.0, 1.0};
    CHECK(agewise::objective_value(s, poly) ==
          Catch::Approx(s.mean).epsilon(1e-10));
    Objective viol;
    viol.kind = Objective::Kind::violation;
    viol.age_limit = 30;
    CHECK(agewise::objective_value(s, viol) ==
          agewise::violation_probability(s, 30));
  }
}

TEST_CASE("threshold sweeps expose the cost trade-off", "[opt]") {
  const std::vector<ServerSpec> family{m1_server(), g_server()};
  const auto rows = agewise::sweep(family, 60, {});
  REQUIRE(rows.size() == agewise::threshold_count(2, 60));

  SECTION("rows arrive in enumeration order and analyzed") {
    const auto tuples = collect(2, 60);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].thresholds == tuples[i]);
      CHECK(rows[i].ok);
    }
  }

  SECTION("transmission cost is nonincreasing in the second threshold") {
    std::vector<const agewise::SweepRow*> fixed;
    for (const auto& row : rows) {
      if (row.thresholds[0] == 8) fixed.push_back(&row);
    }
    REQUIRE(fixed.size() == 53);
    for (std::size_t i = 1; i < fixed.size(); ++i) {
      CHECK(fixed[i]->thresholds[1] == fixed[i - 1]->thresholds[1] + 1);
      CHECK(fixed[i]->transmission_cost <=
            fixed[i - 1]->transmission_cost + 1e-12);
    }
  }

  SECTION("a zero-wait single-server sweep row equals its analysis") {
    const std::vector<ServerSpec> single{g_server()};
    const auto srows = agewise::sweep(single, 5, {});
    REQUIRE(srows.size() == 5);
    const auto s = analyze(Policy(single, {1}));
    CHECK(srows[0].age_cost == Catch::Approx(s.mean).epsilon(1e-10));
    CHECK(srows[0].transmission_cost ==
          Catch::Approx(s.transmission_cost).epsilon(1e-10));
  }
}

TEST_CASE("a distant second threshold reduces to the single server", "[opt]") {
  const std::vector<ServerSpec> pair{m1_server(), g_server()};
  const std::vector<ServerSpec> single{m1_server()};
  FamilyEvaluator::Scratch scratch;
  const FamilyEvaluator far(pair, 2000, {});
  const FamilyEvaluator one(single, 10, {});
  const auto vp = far.evaluate({5, 2000}, scratch);
  const auto vs = one.evaluate({5}, scratch);
  REQUIRE(vp.ok);
  REQUIRE(vs.ok);
  CHECK(std::abs(vp.age_cost - vs.age_cost) / vs.age_cost < 1e-6);
  CHECK(std::abs(vp.transmission_cost - vs.transmission_cost) /
            vs.transmission_cost <
        1e-6);
}

TEST_CASE("candidate ordering is a deterministic total order", "[opt]") {
  agewise::Candidate infeasible;
  agewise::Candidate a{true, 10.0, 5.0, {0}, {3}};
  agewise::Candidate b{true, 11.0, 1.0, {0}, {4}};
  CHECK(agewise::candidate_better(a, infeasible));
  CHECK_FALSE(agewise::candidate_better(infeasible, a));
  CHECK_FALSE(agewise::candidate_better(infeasible, infeasible));
  CHECK(agewise::candidate_better(a, b));

  agewise::Candidate c = a;
  c.transmission_cost = 4.0;
  CHECK(agewise::candidate_better(c, a));

  agewise::Candidate d = a;
  d.thresholds = {2};
  CHECK(agewise::candidate_better(d, a));

  agewise::Candidate e = a;
  e.pool_servers = {0, 1};
  CHECK(agewise::candidate_better(a, e));
}

TEST_CASE("budget search nests and stays monotone", "[opt]") {
  SearchSpec spec;
  spec.pool = {m1_server(), g_server(), u_server()};
  spec.tau_max = 30;
  spec.budgets = {0.001, 0.2, 1.0, 5.0, 40.0, 1e9};

  std::vector<agewise::SearchResult> by_size;
  for (std::size_t k = 1; k <= 3; ++k) {
    spec.max_servers = k;
    by_size.push_back(agewise::optimize(spec));
  }

  SECTION("outcomes echo the requested budgets in order") {
    for (const auto& res : by_size) {
      REQUIRE(res.outcomes.size() == spec.budgets.size());
      for (std::size_t i = 0; i < spec.budgets.size(); ++i) {
        CHECK(res.outcomes[i].budget == spec.budgets[i]);
      }
    }
  }

  SECTION("an unaffordable budget is an explicit infeasible marker") {
    for (const auto& res : by_size) {
      CHECK_FALSE(res.outcomes[0].best.feasible);
      CHECK(std::isinf(res.outcomes[0].best.age_cost));
    }
  }

  SECTION("age cost is nonincreasing in the budget") {
    for (const auto& res : by_size) {
      bool seen_feasible = false;
      double last = std::numeric_limits<double>::infinity();
      for (const auto& out : res.outcomes) {
        if (seen_feasible) CHECK(out.best.feasible);
        if (out.best.feasible) {
          CHECK(out.best.age_cost <= last + 1e-12);
          CHECK(out.best.transmission_cost <= out.budget);
          last = out.best.age_cost;
          seen_feasible = true;
        }
      }
      CHECK(seen_feasible);
    }
  }

  SECTION("larger families can only improve the optimum") {
    for (std::size_t i = 0; i < spec.budgets.size(); ++i) {
      for (std::size_t k = 1; k < by_size.size(); ++k) {
        const auto& small = by_size[k - 1].outcomes[i].best;
        const auto& large = by_size[k].outcomes[i].best;
        if (small.feasible) {
          REQUIRE(large.feasible);
          CHECK(large.age_cost <= small.age_cost + 1e-12);
        }
      }
    }
  }

  SECTION("an unlimited budget beats the fastest zero-wait policy") {
    const auto s = analyze(Policy({u_server()}, {1}));
    const auto& best = by_size[2].outcomes[5].best;
    REQUIRE(best.feasible);
    CHECK(best.age_cost <= s.mean + 1e-9);
  }
}

TEST_CASE("search results are independent of the worker count", "[opt]") {
  SearchSpec spec;
  spec.pool = {m1_server(), g_server()};
  spec.max_servers = 2;
  spec.tau_max = 25;
  spec.budgets = {0.5, 2.0, 10.0, 1e6};

  std::vector<agewise::SearchResult> runs;
  for (const char* threads : {"1", "2", "5"}) {
    setenv("AGEWISE_THREADS", threads, 1);
    runs.push_back(agewise::optimize(spec));
  }
  unsetenv("AGEWISE_THREADS");

  for (std::size_t r = 1; r < runs.size(); ++r) {
    for (std::size_t i = 0; i < spec.budgets.size(); ++i) {
      const auto& a = runs[0].outcomes[i].best;
      const auto& b = runs[r].outcomes[i].best;
      CHECK(a.feasible == b.feasible);
      CHECK(a.age_cost == b.age_cost);
      CHECK(a.transmission_cost == b.transmission_cost);
      CHECK(a.thresholds == b.thresholds);
      CHECK(a.pool_servers == b.pool_servers);
    }
  }
}

TEST_CASE("subsets play in slowest-first order by default", "[opt]") {
  SearchSpec spec;
  spec.pool = {g_server(), m1_server()};  // fast server listed first
  spec.max_servers = 2;
  spec.tau_max = 20;
  spec.budgets = {1e9};

  const auto ordered = agewise::optimize(spec);
  REQUIRE(ordered.outcomes[0].best.feasible);
  if (ordered.outcomes[0].best.pool_servers.size() == 2) {
    CHECK(ordered.outcomes[0].best.pool_servers ==
          std::vector<std::size_t>{1, 0});
  }

  spec.order_by_mean = false;
  const auto verbatim = agewise::optimize(spec);
  REQUIRE(verbatim.outcomes[0].best.feasible);
  if (verbatim.outcomes[0].best.pool_servers.size() == 2) {
    CHECK(verbatim.outcomes[0].best.pool_servers ==
          std::vector<std::size_t>{0, 1});
  }
}

TEST_CASE("thread count respects the environment override", "[opt]") {
  setenv("AGEWISE_THREADS", "7", 1);
  CHECK(agewise::search_threads() == 7);
  setenv("AGEWISE_THREADS", "0", 1);
  CHECK(agewise::search_threads() >= 1);
  setenv("AGEWISE_THREADS", "garbage", 1);
  CHECK(agewise::search_threads() >= 1);
  unsetenv("AGEWISE_THREADS");
  CHECK(agewise::search_threads() >= 1);

  SearchSpec spec;
  CHECK_THROWS_AS(agewise::optimize(spec), std::invalid_argument);
  spec.pool = {g_server()};
  CHECK_THROWS_AS(agewise::optimize(spec), std::invalid_argument);
  spec.budgets = {1.0};
  spec.max_servers = 0;
  CHECK_THROWS_AS(agewise::optimize(spec), std::invalid_argument);
}
