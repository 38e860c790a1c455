#include <catch2/catch_amalgamated.hpp>

#include <agewise/dph.hpp>
#include <agewise/mramc.hpp>
#include <agewise/rng.hpp>

#include <cmath>
#include <vector>

using agewise::ColVec;
using agewise::Dph;
using agewise::Matrix;
using agewise::MrAmc;
using agewise::RowVec;
using agewise::SplitMix64;

namespace {

// Random substochastic regime blocks: rows of A sum to at most 0.9 and B
// carries the complement split across two absorbing states.
struct RandomChain {
  RowVec beta;
  std::vector<long long> thresholds;
  std::vector<Matrix> transient;
  std::vector<Matrix> absorbing;
};

RandomChain make_random_chain(std::uint64_t seed, Eigen::Index m,
                              std::vector<long long> thresholds) {
  SplitMix64 rng(seed);
  RandomChain c;
  c.thresholds = std::move(thresholds);
  c.beta = RowVec::Zero(m);
  double total = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    c.beta(j) = rng.u01();
    total += c.beta(j);
  }
  c.beta /= total;
  const std::size_t regimes = c.thresholds.size() + 1;
  for (std::size_t r = 0; r < regimes; ++r) {
    Matrix a(m, m);
    Matrix b(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
      double row = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        a(i, j) = rng.u01();
        row += a(i, j);
      }
      const double scale = (0.2 + 0.7 * rng.u01()) / row;
      for (Eigen::Index j = 0; j < m; ++j) a(i, j) *= scale;
      const double defect = 1.0 - a.row(i).sum();
      const double w = rng.u01();
      b(i, 0) = defect * w;
      b(i, 1) = defect * (1.0 - w);
    }
    c.transient.push_back(std::move(a));
    c.absorbing.push_back(std::move(b));
  }
  return c;
}

}  // namespace

TEST_CASE("a single-regime chain reproduces its phase-type law", "[mramc]") {
  const Dph g = Dph::geometric(0.3);
  const MrAmc chain(g.beta(), {}, {g.transient()}, {Matrix(g.exit())});

  CHECK(chain.regime_count() == 1);
  CHECK(chain.state_count() == 1);
  CHECK(chain.absorbing_count() == 1);
  for (long long n = 0; n <= 200; ++n) {
    CHECK(std::abs(chain.absorption_cdf(n) - g.cdf(n)) < 1e-12);
  }
  for (long long n = 1; n <= 50; ++n) {
    CHECK(std::abs(chain.absorption_pmf(n) - g.pmf(n)) < 1e-12);
  }
  const Matrix psi = chain.psi();
  CHECK(psi.rows() == 1);
  CHECK(psi.cols() == 1);
  CHECK(psi(0, 0) == Catch::Approx(1.0).margin(1e-12));

  const Dph m = Dph::mixed_geometric(0.05, 0.4, 0.6, 0.4);
  const MrAmc chain2(m.beta(), {}, {m.transient()}, {Matrix(m.exit())});
  for (long long n = 0; n <= 300; ++n) {
    CHECK(std::abs(chain2.absorption_cdf(n) - m.cdf(n)) < 1e-12);
  }
}

TEST_CASE("a scalar two-regime chain matches hand computation", "[mramc]") {
  RowVec beta(1);
  beta << 1.0;
  Matrix a1(1, 1), a2(1, 1), b1(1, 1), b2(1, 1);
  a1 << 0.5;
  b1 << 0.5;
  a2 << 0.2;
  b2 << 0.8;
  const MrAmc chain(beta, {2}, {a1, a2}, {b1, b2});

  CHECK(chain.regime_of(0) == 1);
  CHECK(chain.regime_of(1) == 1);
  CHECK(chain.regime_of(2) == 2);
  CHECK(chain.regime_of(7) == 2);
  CHECK_THROWS_AS(chain.regime_of(-1), std::invalid_argument);

  CHECK(chain.absorption_pmf(1) == Catch::Approx(0.5).margin(1e-15));
  CHECK(chain.absorption_pmf(2) == Catch::Approx(0.25).margin(1e-15));
  CHECK(chain.absorption_pmf(3) == Catch::Approx(0.2).margin(1e-15));
  CHECK(chain.absorption_pmf(4) == Catch::Approx(0.04).margin(1e-15));
  CHECK(chain.absorption_cdf(3) == Catch::Approx(0.95).margin(1e-15));

  const auto rv = chain.regime_vectors();
  REQUIRE(rv.beta.size() == 2);
  CHECK(rv.beta[0](0) == Catch::Approx(1.0).margin(1e-15));
  CHECK(rv.beta[1](0) == Catch::Approx(0.25).margin(1e-15));
  CHECK(rv.sigma[0](0) == Catch::Approx(0.75).margin(1e-15));
  CHECK(rv.sigma[1](0) == Catch::Approx(0.25).margin(1e-15));

  CHECK(chain.psi()(0, 0) == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("psi matches a long slot-by-slot accumulation", "[mramc]") {
  for (std::uint64_t seed : {7ull, 21ull, 99ull}) {
    const RandomChain c = make_random_chain(seed, 4, {2, 5, 9});
    const MrAmc chain(c.beta, c.thresholds, c.transient, c.absorbing);

    const Eigen::Index m = chain.state_count();
    Matrix acc = Matrix::Zero(m, 2);
    Matrix prefix = Matrix::Identity(m, m);
    for (long long n = 0; n < 2000; ++n) {
      const std::size_t r = static_cast<std::size_t>(chain.regime_of(n)) - 1;
      acc += prefix * c.absorbing[r];
      prefix = prefix * c.transient[r];
    }
    const Matrix psi = chain.psi();
    CHECK((psi - acc).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((psi.rowwise().sum() - ColVec::Ones(m)).lpNorm<Eigen::Infinity>() <
          1e-12);

    const auto rv = chain.regime_vectors();
    for (std::size_t r = 0; r < chain.regime_count(); ++r) {
      const long long entry = r == 0 ? 0 : chain.thresholds()[r - 1];
      CHECK((rv.beta[r] - chain.transient_vector(entry))
                .lpNorm<Eigen::Infinity>() < 1e-14);
    }
    RowVec sigma_total = RowVec::Zero(2);
    for (const RowVec& s : rv.sigma) sigma_total += s;
    CHECK((sigma_total - c.beta * psi).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(sigma_total.sum() == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("monte carlo absorption agrees with the operator", "[mramc]") {
  const RandomChain c = make_random_chain(404, 3, {3, 7});
  const MrAmc chain(c.beta, c.thresholds, c.transient, c.absorbing);
  const RowVec target = c.beta * chain.psi();

  SplitMix64 rng(2024);
  const long long paths = 200000;
  std::vector<long long> absorbed(2, 0);
  long long by_slot3 = 0;
  for (long long p = 0; p < paths; ++p) {
    double u = rng.u01();
    Eigen::Index s = 0;
    double cum = 0.0;
    for (Eigen::Index j = 0; j < 3; ++j) {
      cum += c.beta(j);
      if (u < cum) {
        s = j;
        break;
      }
      s = j;
    }
    for (long long n = 0;; ++n) {
      const std::size_t r = static_cast<std::size_t>(chain.regime_of(n)) - 1;
      u = rng.u01();
      cum = 0.0;
      Eigen::Index next = -1;
      for (Eigen::Index j = 0; j < 3; ++j) {
        cum += c.transient[r](s, j);
        if (u < cum) {
          next = j;
          break;
        }
      }
      if (next >= 0) {
        s = next;
        continue;
      }
      const Eigen::Index k = u < cum + c.absorbing[r](s, 0) ? 0 : 1;
      ++absorbed[static_cast<std::size_t>(k)];
      if (n + 1 <= 3) ++by_slot3;
      break;
    }
  }
  const double n = static_cast<double>(paths);
  for (Eigen::Index k = 0; k < 2; ++k) {
    const double p = target(k);
    const double se = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(absorbed[static_cast<std::size_t>(k)] / n - p) < 5.0 * se);
  }
  const double cdf3 = chain.absorption_cdf(3);
  const double se3 = std::sqrt(cdf3 * (1.0 - cdf3) / n);
  CHECK(std::abs(by_slot3 / n - cdf3) < 5.0 * se3);
}

TEST_CASE("empty regimes are dropped", "[mramc]") {
  const RandomChain c = make_random_chain(11, 3, {0, 4});
  const MrAmc chain(c.beta, c.thresholds, c.transient, c.absorbing);
  CHECK(chain.regime_count() == 2);
  REQUIRE(chain.thresholds().size() == 1);
  CHECK(chain.thresholds()[0] == 4);

  const MrAmc direct(c.beta, {4}, {c.transient[1], c.transient[2]},
                     {c.absorbing[1], c.absorbing[2]});
  for (long long n = 0; n <= 40; ++n) {
    CHECK(std::abs(chain.absorption_cdf(n) - direct.absorption_cdf(n)) <
          1e-14);
  }

  const RandomChain d = make_random_chain(12, 3, {4, 4});
  const MrAmc squeezed(d.beta, d.thresholds, d.transient, d.absorbing);
  CHECK(squeezed.regime_count() == 2);
  const MrAmc direct2(d.beta, {4}, {d.transient[0], d.transient[2]},
                      {d.absorbing[0], d.absorbing[2]});
  for (long long n = 0; n <= 40; ++n) {
    CHECK(std::abs(squeezed.absorption_cdf(n) - direct2.absorption_cdf(n)) <
          1e-14);
  }
}

TEST_CASE("construction validates the regime data", "[mramc]") {
  const RandomChain c = make_random_chain(5, 3, {3});

  CHECK_THROWS_WITH(MrAmc(c.beta, {3, 2},
                          {c.transient[0], c.transient[1], c.transient[1]},
                          {c.absorbing[0], c.absorbing[1], c.absorbing[1]}),
                    Catch::Matchers::ContainsSubstring("increase"));

  Matrix leaky = c.absorbing[1];
  leaky.row(0) *= 0.5;
  CHECK_THROWS_WITH(
      MrAmc(c.beta, {3}, {c.transient[0], c.transient[1]},
            {c.absorbing[0], leaky}),
      Catch::Matchers::ContainsSubstring("regime 2"));

  Matrix eye = Matrix::Identity(3, 3);
  Matrix zero = Matrix::Zero(3, 2);
  CHECK_THROWS_WITH(MrAmc(c.beta, {3}, {c.transient[0], eye},
                          {c.absorbing[0], zero}),
                    Catch::Matchers::ContainsSubstring("certainty"));

  RowVec bad = RowVec::Ones(4);
  CHECK_THROWS_AS(MrAmc(bad, {3}, {c.transient[0], c.transient[1]},
                        {c.absorbing[0], c.absorbing[1]}),
                  std::invalid_argument);

  CHECK_THROWS_AS(MrAmc(c.beta, {3}, {c.transient[0]},
                        {c.absorbing[0]}),
                  std::invalid_argument);
}
