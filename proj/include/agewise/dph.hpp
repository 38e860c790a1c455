#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "agewise/linalg.hpp"
#include "agewise/rng.hpp"

namespace agewise {

// Stirling numbers of the second kind with exact integer arithmetic.
// S(20, j) still fits in 64 bits; larger first arguments are rejected so the
// moment machinery never silently loses precision.
inline std::uint64_t stirling2(int i, int j) {
  if (i < 0 || j < 0 || j > i) {
    throw std::invalid_argument("stirling2: require 0 <= j <= i");
  }
  if (i > 20) {
    throw std::invalid_argument("stirling2: first argument capped at 20");
  }
  if (i == 0) return 1;  // S(0,0) = 1, and j == 0 <= i == 0 here
  if (j == 0) return 0;
  std::vector<std::uint64_t> row(static_cast<std::size_t>(i) + 1, 0);
  row[1] = 1;  // S(1,1)
  for (int n = 2; n <= i; ++n) {
    for (int k = std::min(n, i); k >= 1; --k) {
      row[static_cast<std::size_t>(k)] =
          static_cast<std::uint64_t>(k) * row[static_cast<std::size_t>(k)] +
          row[static_cast<std::size_t>(k) - 1];
    }
  }
  return row[static_cast<std::size_t>(j)];
}

// Discrete phase-type distribution on {1, 2, ...}: the absorption time of a
// Markov chain with initial row vector beta over transient states and
// substochastic transient block A.  Immutable once constructed; the
// constructor validates stochasticity and that absorption is certain
// (spectral radius of A below one).
class Dph {
 public:
  Dph(RowVec beta, Matrix a) : beta_(std::move(beta)), A_(std::move(a)) {
    const Eigen::Index m = A_.rows();
    if (m == 0 || A_.cols() != m || beta_.size() != m) {
      throw std::invalid_argument("dph: inconsistent dimensions");
    }
    if (!linalg::is_probability_row(beta_)) {
      throw std::invalid_argument("dph: beta is not a probability vector");
    }
    if (!linalg::is_substochastic(A_)) {
      throw std::invalid_argument("dph: transient block is not substochastic");
    }
    if (linalg::spectral_radius(A_) >= 1.0 - 1e-10) {
      throw std::invalid_argument(
          "dph: spectral radius of transient block must be below one");
    }
    exit_ = ColVec::Ones(m) - A_.rowwise().sum();
    for (Eigen::Index r = 0; r < m; ++r) {
      if (exit_(r) < 0.0) exit_(r) = 0.0;  // clip roundoff from the row sums
    }
    build_sampling_tables();
  }

  // Geometric distribution with success probability p, support {1, 2, ...}.
  static Dph geometric(double p) {
    if (!(p > 0.0) || p > 1.0) {
      throw std::invalid_argument("dph: geometric parameter must be in (0, 1]");
    }
    RowVec beta(1);
    beta << 1.0;
    Matrix a(1, 1);
    a << 1.0 - p;
    return Dph(std::move(beta), std::move(a));
  }

  // Two-branch mixture of geometrics: with probability w1 the duration is
  // Geo(p1), with probability w2 it is Geo(p2).
  static Dph mixed_geometric(double p1, double p2, double w1, double w2) {
    if (!(p1 > 0.0) || p1 > 1.0 || !(p2 > 0.0) || p2 > 1.0) {
      throw std::invalid_argument(
          "dph: mixed_geometric rates must be in (0, 1]");
    }
    if (w1 < 0.0 || w2 < 0.0 || std::abs(w1 + w2 - 1.0) > 1e-12) {
      throw std::invalid_argument(
          "dph: mixed_geometric weights must be nonnegative and sum to one");
    }
    RowVec beta(2);
    beta << w1, w2;
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 1.0 - p1;
    a(1, 1) = 1.0 - p2;
    return Dph(std::move(beta), std::move(a));
  }

  // Exact representation of a pmf with finite support {1, ..., M}:
  // mass[k] is the probability of duration k + 1.  The chain walks phases
  // 1 -> 2 -> ... and exits from phase m with the hazard of the pmf, which
  // reproduces the input masses exactly.  The masses must sum to one within
  // 1e-9; they are renormalized before use.
  static Dph from_bounded_pmf(std::vector<double> mass) {
    while (!mass.empty() && mass.back() == 0.0) mass.pop_back();
    if (mass.empty()) {
      throw std::invalid_argument("dph: bounded pmf has empty support");
    }
    double total = 0.0;
    for (double p : mass) {
      if (p < 0.0 || !std::isfinite(p)) {
        throw std::invalid_argument("dph: bounded pmf has an invalid mass");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument(
          "dph: bounded pmf masses sum to " + std::to_string(total) +
          ", expected 1 within 1e-9");
    }
    const auto m = static_cast<Eigen::Index>(mass.size());
    RowVec beta = RowVec::Zero(m);
    beta(0) = 1.0;
    Matrix a = Matrix::Zero(m, m);
    double tail = total;  // sum of masses at or above the current phase
    for (Eigen::Index k = 0; k + 1 < m; ++k) {
      a(k, k + 1) = 1.0 - mass[static_cast<std::size_t>(k)] / tail;
      tail -= mass[static_cast<std::size_t>(k)];
    }
    return Dph(std::move(beta), std::move(a));
  }

  Eigen::Index order() const { return A_.rows(); }
  const RowVec& beta() const { return beta_; }
  const Matrix& transient() const { return A_; }
  const ColVec& exit() const { return exit_; }

  // P(T = n) = beta A^(n-1) a for n >= 1.
  double pmf(long long n) const {
    if (n < 1) return 0.0;
    RowVec v = beta_;
    for (long long i = 1; i < n; ++i) v = v * A_;
    return v.dot(exit_);
  }

  // P(T <= n) = 1 - beta A^n 1.
  double cdf(long long n) const {
    if (n < 0) return 0.0;
    RowVec v = beta_;
    for (long long i = 0; i < n; ++i) v = v * A_;
    return 1.0 - v.sum();
  }

  // i-th factorial moment E[T (T-1) ... (T-i+1)] = i! beta (I-A)^-(i+1) A^(i-1) a.
  double factorial_moment(int i) const {
    if (i < 0) throw std::invalid_argument("dph: negative moment order");
    if (i == 0) return 1.0;
    const Matrix eye = Matrix::Identity(A_.rows(), A_.cols());
    RowVec v = beta_;
    for (int k = 0; k < i + 1; ++k) v = linalg::solve_left(eye - A_, v);
    for (int k = 0; k < i - 1; ++k) v = v * A_;
    double fact = 1.0;
    for (int k = 2; k <= i; ++k) fact *= k;
    return fact * v.dot(exit_);
  }

  // Ordinary moment E[T^i] assembled from factorial moments via Stirling
  // numbers of the second kind.
  double moment(int i) const {
    if (i < 0) throw std::invalid_argument("dph: negative moment order");
    if (i == 0) return 1.0;
    double acc = 0.0;
    for (int j = 1; j <= i; ++j) {
      acc += static_cast<double>(stirling2(i, j)) * factorial_moment(j);
    }
    return acc;
  }

  double mean() const { return factorial_moment(1); }

  // Squared coefficient of variation Var[T] / E[T]^2.
  double scov() const {
    double m1 = moment(1);
    double m2 = moment(2);
    return (m2 - m1 * m1) / (m1 * m1);
  }

  // Draws one duration by walking the phase chain slot by slot.
  long long sample(SplitMix64& rng) const {
    const auto m = static_cast<std::size_t>(order());
    std::size_t phase = pick(init_cum_, rng.u01());
    for (long long t = 1;; ++t) {
      std::size_t next = pick(row_cum_[phase], rng.u01());
      if (next == m) return t;  // exited the transient set
      phase = next;
    }
  }

 private:
  void build_sampling_tables() {
    const auto m = static_cast<std::size_t>(order());
    init_cum_.resize(m);
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      acc += beta_(static_cast<Eigen::Index>(j));
      init_cum_[j] = acc;
    }
    init_cum_.back() = 1.0;
    row_cum_.assign(m, std::vector<double>(m + 1, 0.0));
    for (std::size_t r = 0; r < m; ++r) {
      acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        acc += A_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
        row_cum_[r][j] = acc;
      }
      row_cum_[r][m] = 1.0;  // transient mass plus exit mass
    }
  }

  static std::size_t pick(const std::vector<double>& cum, double u) {
    for (std::size_t j = 0; j < cum.size(); ++j) {
      if (u < cum[j]) return j;
    }
    return cum.size() - 1;
  }

  RowVec beta_;
  Matrix A_;
  ColVec exit_;
  std::vector<double> init_cum_;
  std::vector<std::vector<double>> row_cum_;
};

}  // namespace agewise
