#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "agewise/linalg.hpp"

namespace agewise {

// Absorption operator of a multi-regime absorbing chain: entry (s, k) is
// the probability that a walk started in transient state s is eventually
// absorbed in absorbing state k.  Regime i's transient/absorbing blocks
// govern slots [tau_{i-1}, tau_i); the final regime is summed through its
// geometric closed form.  Thresholds must be strictly increasing and
// positive.
inline Matrix compute_psi(const std::vector<long long>& thresholds,
                          const std::vector<Matrix>& transient,
                          const std::vector<Matrix>& absorbing) {
  if (transient.empty() || transient.size() != thresholds.size() + 1 ||
      absorbing.size() != transient.size()) {
    throw std::invalid_argument("mramc: inconsistent regime counts");
  }
  const Eigen::Index m = transient.front().rows();
  Matrix acc = Matrix::Zero(m, absorbing.front().cols());
  Matrix prefix = Matrix::Identity(m, m);
  for (std::size_t r = 0; r + 1 < transient.size(); ++r) {
    const long long lo = r == 0 ? 0 : thresholds[r - 1];
    const long long span = thresholds[r] - lo;
    if (span <= 0) {
      throw std::invalid_argument("mramc: thresholds must increase");
    }
    Matrix partial = Matrix::Zero(m, m);
    Matrix p = Matrix::Identity(m, m);
    for (long long l = 0; l < span; ++l) {
      partial += p;
      p = p * transient[r];
    }
    acc += prefix * (partial * absorbing[r]);
    prefix = prefix * p;
  }
  const Matrix eye = Matrix::Identity(m, m);
  acc += prefix *
         linalg::solve_right_mat(eye - transient.back(), absorbing.back());
  return acc;
}

// Multi-regime absorbing Markov chain.  Time is partitioned into I regimes
// by thresholds 0 = tau_0 < tau_1 < ... < tau_{I-1} < tau_I = infinity;
// the transition from slot n to slot n+1 uses the transient block A_i and
// absorption block B_i of the regime containing n.  Regime i covers
// [tau_{i-1}, tau_i) and regimes are numbered from one in the public API.
//
// The constructor drops empty regimes (repeated thresholds, or a leading
// threshold of zero) so that downstream recursions can assume strictly
// increasing thresholds.
class MrAmc {
 public:
  MrAmc(RowVec beta, std::vector<long long> thresholds,
        std::vector<Matrix> transient, std::vector<Matrix> absorbing)
      : beta_(std::move(beta)),
        thresholds_(std::move(thresholds)),
        transient_(std::move(transient)),
        absorbing_(std::move(absorbing)) {
    if (transient_.empty() || transient_.size() != thresholds_.size() + 1 ||
        absorbing_.size() != transient_.size()) {
      throw std::invalid_argument("mramc: inconsistent regime counts");
    }
    drop_empty_regimes();
    validate();
  }

  Eigen::Index state_count() const { return transient_.front().rows(); }
  Eigen::Index absorbing_count() const { return absorbing_.front().cols(); }
  std::size_t regime_count() const { return transient_.size(); }
  const RowVec& beta() const { return beta_; }
  const std::vector<long long>& thresholds() const { return thresholds_; }
  const std::vector<Matrix>& transients() const { return transient_; }
  const std::vector<Matrix>& absorbers() const { return absorbing_; }

  // One-based index of the regime whose half-open window contains slot n.
  int regime_of(long long n) const {
    if (n < 0) throw std::invalid_argument("mramc: negative slot index");
    int r = 0;
    while (r < static_cast<int>(thresholds_.size()) && n >= thresholds_[r]) {
      ++r;
    }
    return r + 1;
  }

  struct RegimeVectors {
    std::vector<RowVec> beta;   // state distribution entering each regime
    std::vector<RowVec> sigma;  // absorption mass routed within each regime
  };

  // Entry vectors beta_i = beta_{i-1} A_{i-1}^{delta_{i-1}} and per-regime
  // absorption masses sigma_i; the final regime uses the geometric closed
  // form through (I - A_I)^-1.
  RegimeVectors regime_vectors() const {
    RegimeVectors rv;
    const std::size_t regimes = regime_count();
    rv.beta.resize(regimes);
    rv.sigma.resize(regimes);
    RowVec v = beta_;
    for (std::size_t r = 0; r < regimes; ++r) {
      rv.beta[r] = v;
      if (r + 1 < regimes) {
        const long long span = regime_span(r);
        RowVec occupancy = RowVec::Zero(v.size());
        for (long long l = 0; l < span; ++l) {
          occupancy += v;
          v = v * transient_[r];
        }
        rv.sigma[r] = occupancy * absorbing_[r];
      } else {
        const Matrix eye = Matrix::Identity(state_count(), state_count());
        RowVec occupancy = linalg::solve_left(eye - transient_[r], v);
        rv.sigma[r] = occupancy * absorbing_[r];
      }
    }
    return rv;
  }

  // Distribution over transient states at slot n (defect = absorbed mass).
  RowVec transient_vector(long long n) const {
    if (n < 0) throw std::invalid_argument("mramc: negative slot index");
    RowVec v = beta_;
    long long slot = 0;
    std::size_t r = 0;
    while (slot < n) {
      if (r + 1 < regime_count() && slot >= thresholds_[r]) ++r;
      v = v * transient_[r];
      ++slot;
    }
    return v;
  }

  // P(absorbed by slot n) = 1 - x_n 1.
  double absorption_cdf(long long n) const {
    if (n < 0) return 0.0;
    return 1.0 - transient_vector(n).sum();
  }

  double absorption_pmf(long long n) const {
    if (n < 1) return 0.0;
    return absorption_cdf(n) - absorption_cdf(n - 1);
  }

  // Absorption operator (see compute_psi); rows sum to one whenever
  // absorption is certain.
  Matrix psi() const { return compute_psi(thresholds_, transient_, absorbing_); }

 private:
  long long regime_span(std::size_t r) const {
    const long long lo = r == 0 ? 0 : thresholds_[r - 1];
    return thresholds_[r] - lo;
  }

  void drop_empty_regimes() {
    std::size_t r = 0;
    while (r < thresholds_.size()) {
      const long long lo = r == 0 ? 0 : thresholds_[r - 1];
      if (thresholds_[r] == lo) {
        thresholds_.erase(thresholds_.begin() + static_cast<std::ptrdiff_t>(r));
        transient_.erase(transient_.begin() + static_cast<std::ptrdiff_t>(r));
        absorbing_.erase(absorbing_.begin() + static_cast<std::ptrdiff_t>(r));
      } else {
        ++r;
      }
    }
  }

  void validate() const {
    const Eigen::Index m = transient_.front().rows();
    const Eigen::Index k = absorbing_.front().cols();
    if (beta_.size() != m) {
      throw std::invalid_argument("mramc: beta dimension mismatch");
    }
    if (!linalg::is_probability_row(beta_)) {
      throw std::invalid_argument("mramc: beta is not a probability vector");
    }
    for (std::size_t r = 0; r < thresholds_.size(); ++r) {
      const long long lo = r == 0 ? 0 : thresholds_[r - 1];
      if (thresholds_[r] <= lo) {
        throw std::invalid_argument("mramc: thresholds must increase");
      }
    }
    for (std::size_t r = 0; r < transient_.size(); ++r) {
      const Matrix& a = transient_[r];
      const Matrix& b = absorbing_[r];
      if (a.rows() != m || a.cols() != m || b.rows() != m || b.cols() != k) {
        throw std::invalid_argument("mramc: regime dimension mismatch");
      }
      if ((a.array() < -1e-12).any() || (b.array() < -1e-12).any()) {
        throw std::invalid_argument("mramc: negative transition probability");
      }
      ColVec defect = a.rowwise().sum() + b.rowwise().sum() - ColVec::Ones(m);
      if (defect.lpNorm<Eigen::Infinity>() > 1e-12) {
        throw std::invalid_argument(
            "mramc: regime " + std::to_string(r + 1) +
            " rows do not sum to one across transient and absorbing blocks");
      }
    }
    if (linalg::spectral_radius(transient_.back()) >= 1.0 - 1e-10) {
      throw std::invalid_argument(
          "mramc: final regime must absorb with certainty");
    }
  }

  RowVec beta_;
  std::vector<long long> thresholds_;
  std::vector<Matrix> transient_;
  std::vector<Matrix> absorbing_;
};

}  // namespace agewise
