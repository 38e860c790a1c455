#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "agewise/linalg.hpp"
#include "agewise/mramc.hpp"
#include "agewise/policy.hpp"

namespace agewise {

// The AoI chain tracks one full update cycle: states (1, j, m) while the
// packet whose reception starts the cycle is in service at server j in
// phase m, then states (2, j, m) while the follow-up packet waits for or
// occupies server j.  States are laid out packet-1 blocks first, then
// packet-2 blocks, so the chain order is twice the total phase count.
// Absorbing state j means the follow-up packet was delivered by server j.

namespace aoi_detail {

inline std::vector<Eigen::Index> phase_offsets(
    const std::vector<ServerSpec>& servers) {
  std::vector<Eigen::Index> off(servers.size() + 1, 0);
  for (std::size_t j = 0; j < servers.size(); ++j) {
    off[j + 1] = off[j] + servers[j].service.order();
  }
  return off;
}

inline std::vector<Eigen::Index> phase_offsets(const Policy& p) {
  return phase_offsets(p.servers());
}

}  // namespace aoi_detail

// Transition blocks for one slot of the cycle chain, determined by which
// servers' phase processes are live this slot (a prefix, since thresholds
// are sorted) and which server a completion occurring this slot is routed
// to.
struct SlotBlocks {
  Matrix transient;
  Matrix absorbing;
};

inline SlotBlocks canonical_blocks(const std::vector<ServerSpec>& servers,
                                   std::size_t live_servers,
                                   std::size_t route) {
  const auto off = aoi_detail::phase_offsets(servers);
  const Eigen::Index total = off.back();
  const Eigen::Index m = 2 * total;
  SlotBlocks blocks{
      Matrix::Zero(m, m),
      Matrix::Zero(m, static_cast<Eigen::Index>(servers.size()))};
  for (std::size_t j = 0; j < servers.size(); ++j) {
    const Dph& svc = servers[j].service;
    const Eigen::Index mj = svc.order();
    const Eigen::Index p1 = off[j];
    const Eigen::Index p2 = total + off[j];
    // Packet-1 rows: phase evolution plus completion hand-off into the
    // packet-2 block of the routed server.
    blocks.transient.block(p1, p1, mj, mj) = svc.transient();
    const Dph& dst = servers[route].service;
    blocks.transient.block(p1, total + off[route], mj, dst.order()) +=
        svc.exit() * dst.beta();
    // Packet-2 rows: live servers evolve and may deliver; the rest hold.
    if (j < live_servers) {
      blocks.transient.block(p2, p2, mj, mj) = svc.transient();
      blocks.absorbing.block(p2, static_cast<Eigen::Index>(j), mj, 1) =
          svc.exit();
    } else {
      blocks.transient.block(p2, p2, mj, mj) = Matrix::Identity(mj, mj);
    }
  }
  return blocks;
}

inline SlotBlocks canonical_blocks(const Policy& p, std::size_t live_servers,
                                   std::size_t route) {
  return canonical_blocks(p.servers(), live_servers, route);
}

// Exact transition blocks governing the step from slot n to slot n + 1 of
// the cycle clock.  A completion on this step is observed at age n + 1, so
// it is routed to the server whose band contains n + 1 (or to the server
// that will be used at tau_1 if the cycle is still below the wait
// threshold).  Server j's packet-2 phases advance once n has reached
// tau_j.
inline SlotBlocks slot_blocks(const Policy& p, long long n) {
  if (n < 0) throw std::invalid_argument("aoi: negative slot index");
  const auto& tau = p.thresholds();
  std::size_t live = 0;
  while (live < tau.size() && tau[live] <= n) ++live;
  const std::size_t route = p.server_for_age(p.start_age(n + 1));
  return canonical_blocks(p, live, route);
}

// Regime decomposition of the slot-indexed blocks: consecutive slots with
// identical blocks are grouped, which leaves at most 2J + 1 regimes (band
// interiors plus the single slot before each threshold, where completions
// are already routed to the next band).
struct PlanRegime {
  long long start = 0;
  std::size_t live_servers = 0;
  std::size_t route = 0;
};

// Zero-based index of the band containing age n (ties resolved towards the
// later server, as in Policy::server_for_age), clamped up to tau_1.
inline std::size_t band_of(const std::vector<long long>& tau, long long n) {
  if (n < tau.front()) n = tau.front();
  std::size_t j = 0;
  while (j + 1 < tau.size() && n >= tau[j + 1]) ++j;
  return j;
}

inline std::vector<PlanRegime> chain_plan(const std::vector<long long>& tau) {
  std::vector<long long> starts{0};
  for (long long t : tau) {
    if (t - 1 > 0) starts.push_back(t - 1);
    starts.push_back(t);
  }
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
  std::vector<PlanRegime> plan;
  for (long long s : starts) {
    std::size_t live = 0;
    while (live < tau.size() && tau[live] <= s) ++live;
    PlanRegime r{s, live, band_of(tau, s + 1)};
    if (!plan.empty() && plan.back().live_servers == r.live_servers &&
        plan.back().route == r.route) {
      continue;
    }
    plan.push_back(r);
  }
  return plan;
}

inline std::vector<PlanRegime> chain_plan(const Policy& p) {
  return chain_plan(p.thresholds());
}

// Cycle-chain pieces in multi-regime form (thresholds are the regime start
// slots after the initial one).
struct ChainParts {
  std::vector<long long> thresholds;
  std::vector<Matrix> transient;
  std::vector<Matrix> absorbing;
  std::vector<PlanRegime> plan;
};

inline ChainParts build_chain(const Policy& p) {
  ChainParts parts;
  parts.plan = chain_plan(p);
  for (std::size_t r = 0; r < parts.plan.size(); ++r) {
    if (r > 0) parts.thresholds.push_back(parts.plan[r].start);
    SlotBlocks blocks =
        canonical_blocks(p, parts.plan[r].live_servers, parts.plan[r].route);
    parts.transient.push_back(std::move(blocks.transient));
    parts.absorbing.push_back(std::move(blocks.absorbing));
  }
  return parts;
}

// One-regime-per-band form with J + 1 regimes split at the policy
// thresholds: regime 1 routes completions to server 1 and holds every
// packet-2 phase, regime i >= 2 routes to server i - 1 and advances the
// first i - 1 packet-2 blocks.  build_chain refines this decomposition at
// the single slot before each threshold; this coarse form is what the
// structural identities and tests are phrased against.
inline std::pair<std::vector<Matrix>, std::vector<Matrix>> build_matrices(
    const Policy& p) {
  std::vector<Matrix> transient;
  std::vector<Matrix> absorbing;
  for (std::size_t i = 0; i <= p.server_count(); ++i) {
    SlotBlocks blocks = canonical_blocks(p, i, i == 0 ? 0 : i - 1);
    transient.push_back(std::move(blocks.transient));
    absorbing.push_back(std::move(blocks.absorbing));
  }
  return {std::move(transient), std::move(absorbing)};
}

// Selection matrix: row j is server j's initial phase vector placed in its
// packet-1 block, so right-multiplying the absorption operator by it maps
// "cycle begun by server j" to delivery probabilities per server.
inline Matrix selection_matrix(const Policy& p) {
  const auto off = aoi_detail::phase_offsets(p);
  const Eigen::Index total = off.back();
  Matrix sel = Matrix::Zero(static_cast<Eigen::Index>(p.server_count()),
                            2 * total);
  for (std::size_t j = 0; j < p.server_count(); ++j) {
    sel.block(static_cast<Eigen::Index>(j), off[j], 1,
              p.servers()[j].service.order()) = p.servers()[j].service.beta();
  }
  return sel;
}

// Stationary distribution of a row-stochastic routing matrix.  A zero
// column is fine (that server is simply never used); a genuinely reducible
// matrix with two or more closed classes has no unique stationary vector
// and is rejected.
inline RowVec solve_kappa(const Matrix& routing) {
  const Eigen::Index j = routing.rows();
  if (routing.cols() != j || j == 0) {
    throw std::invalid_argument("aoi: routing matrix must be square");
  }
  Matrix shifted = routing - Matrix::Identity(j, j);
  Eigen::FullPivLU<Matrix> lu(shifted);
  lu.setThreshold(1e-9);
  if (lu.rank() < j - 1) {
    throw std::runtime_error(
        "aoi: routing matrix is reducible (multiple closed classes); the "
        "stationary server distribution is not unique");
  }
  Matrix system = shifted.transpose();
  system.row(j - 1) = RowVec::Ones(j);
  ColVec rhs = ColVec::Zero(j);
  rhs(j - 1) = 1.0;
  ColVec kappa = linalg::solve_right(system, rhs);
  for (Eigen::Index i = 0; i < j; ++i) {
    if (kappa(i) < 0.0) {
      if (kappa(i) < -1e-9) {
        throw std::runtime_error("aoi: stationary solve produced a negative");
      }
      kappa(i) = 0.0;
    }
  }
  kappa /= kappa.sum();
  return kappa.transpose();
}

// Full cycle analysis of a policy: the stationary AoI distribution in
// closed form together with the operating statistics read off the same
// chain.
struct AoiSolution {
  Policy policy;
  MrAmc chain;
  RowVec kappa;              // stationary share of cycles begun per server
  ColVec h;                  // indicator of packet-2 (post-delivery) states
  MrAmc::RegimeVectors rv;   // cached regime entry vectors of the chain
  double eta = 0.0;          // reciprocal mean cycle length
  double mean = 0.0;         // stationary mean AoI
  double p_wait = 0.0;       // stationary probability of idling below tau_1
  std::vector<double> frequency;  // per-server transmission rate f_j
  double transmission_cost = 0.0;
};

inline AoiSolution analyze(const Policy& p) {
  ChainParts parts = build_chain(p);
  const Matrix psi =
      compute_psi(parts.thresholds, parts.transient, parts.absorbing);
  const Matrix sel = selection_matrix(p);
  const Matrix routing = sel * psi;
  RowVec kappa = solve_kappa(routing);
  RowVec beta = kappa * sel;

  MrAmc chain(beta, parts.thresholds, parts.transient, parts.absorbing);
  const auto off = aoi_detail::phase_offsets(p);
  const Eigen::Index total = off.back();
  ColVec h = ColVec::Zero(2 * total);
  h.segment(total, total).setOnes();

  MrAmc::RegimeVectors rv = chain.regime_vectors();
  const auto& tau = chain.thresholds();
  const long long tau_last = tau.empty() ? 0 : tau.back();
  const long long tau_wait = p.wait_threshold();

  // One pass over the finite regimes accumulates the cycle-length,
  // wait-probability and mean numerators; the final regime contributes
  // geometric closed forms.
  double inv_eta = 0.0;
  double wait_mass = 0.0;
  double mean_mass = 0.0;
  for (std::size_t r = 0; r + 1 < chain.regime_count(); ++r) {
    const long long lo = r == 0 ? 0 : tau[r - 1];
    const long long hi = tau[r];
    RowVec v = rv.beta[r];
    for (long long n = lo; n < hi; ++n) {
      const double mass = v.dot(h);
      inv_eta += mass;
      mean_mass += static_cast<double>(n) * mass;
      if (n < tau_wait) wait_mass += mass;
      v = v * chain.transients()[r];
    }
  }
  const Matrix& a_last = chain.transients().back();
  const Matrix eye = Matrix::Identity(a_last.rows(), a_last.cols());
  const RowVec u = linalg::solve_left(eye - a_last, rv.beta.back());
  const RowVec u2 = linalg::solve_left(eye - a_last, u);
  inv_eta += u.dot(h);
  mean_mass += static_cast<double>(tau_last) * u.dot(h) + u2.dot(a_last * h);

  AoiSolution s{p,
                std::move(chain),
                std::move(kappa),
                std::move(h),
                std::move(rv),
                1.0 / inv_eta,
                0.0,
                0.0,
                {},
                0.0};
  s.mean = s.eta * mean_mass;
  s.p_wait = s.eta * wait_mass;

  double weighted_service = 0.0;
  for (std::size_t j = 0; j < p.server_count(); ++j) {
    weighted_service += s.kappa(static_cast<Eigen::Index>(j)) *
                        p.servers()[j].service.mean();
  }
  s.frequency.resize(p.server_count());
  for (std::size_t j = 0; j < p.server_count(); ++j) {
    s.frequency[j] = (1.0 - s.p_wait) *
                     s.kappa(static_cast<Eigen::Index>(j)) / weighted_service;
    s.transmission_cost += p.servers()[j].cost * s.frequency[j];
  }
  return s;
}

// P(AoI = n) in steady state.
inline double aoi_pmf(const AoiSolution& s, long long n) {
  if (n < 1) return 0.0;
  return s.eta * s.chain.transient_vector(n).dot(s.h);
}

// P(AoI = n) for n = 1..n_max in one sweep (index i holds n = i + 1).
inline std::vector<double> aoi_pmf_range(const AoiSolution& s,
                                         long long n_max) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max<long long>(n_max, 0)));
  RowVec v = s.chain.beta();
  std::size_t r = 0;
  const auto& tau = s.chain.thresholds();
  for (long long n = 0; n < n_max; ++n) {
    if (r < tau.size() && n >= tau[r]) ++r;
    v = v * s.chain.transients()[r];
    out.push_back(s.eta * v.dot(s.h));
  }
  return out;
}

inline double mean_aoi(const AoiSolution& s) { return s.mean; }

struct OperatingStats {
  double p_wait = 0.0;
  std::vector<double> frequency;
  double transmission_cost = 0.0;
};

inline OperatingStats operating_stats(const AoiSolution& s) {
  return {s.p_wait, s.frequency, s.transmission_cost};
}

namespace aoi_detail {

// w[m] = sum_{l >= 0} l^m A^l h for m = 0..deg, assembled from the
// factorial-style sums A^j (I - A)^-(j+1) h via Stirling numbers.
inline std::vector<ColVec> tail_weight_vectors(const Matrix& a,
                                               const ColVec& h, int deg) {
  const Matrix eye = Matrix::Identity(a.rows(), a.cols());
  std::vector<ColVec> basis(static_cast<std::size_t>(deg) + 1);
  basis[0] = linalg::solve_right(eye - a, h);
  for (int j = 1; j <= deg; ++j) {
    basis[static_cast<std::size_t>(j)] =
        a * linalg::solve_right(eye - a, basis[static_cast<std::size_t>(j - 1)]);
  }
  std::vector<ColVec> w(static_cast<std::size_t>(deg) + 1,
                        ColVec::Zero(a.rows()));
  for (int m = 0; m <= deg; ++m) {
    double fact = 1.0;
    for (int j = 0; j <= m; ++j) {
      if (j > 0) fact *= j;
      w[static_cast<std::size_t>(m)] +=
          static_cast<double>(stirling2(m, j)) * fact *
          basis[static_cast<std::size_t>(j)];
    }
  }
  return w;
}

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// sum_{n > cutoff} n^deg P(AoI = n), exact, for cutoff at or beyond the
// start of the final regime whose entry vector (at slot `from`) is v.
inline double tail_power_mass(const AoiSolution& s, const RowVec& v_from,
                              long long from, int deg) {
  const Matrix& a = s.chain.transients().back();
  const auto w = tail_weight_vectors(a, s.h, deg);
  double acc = 0.0;
  for (int m = 0; m <= deg; ++m) {
    acc += binomial(deg, m) *
           std::pow(static_cast<double>(from), static_cast<double>(deg - m)) *
           v_from.dot(w[static_cast<std::size_t>(m)]);
  }
  return s.eta * acc;
}

}  // namespace aoi_detail

// P(AoI > a).
inline double violation_probability(const AoiSolution& s, long long a) {
  if (a < 1) return 1.0;
  const auto& tau = s.chain.thresholds();
  const long long tau_last = tau.empty() ? 0 : tau.back();
  if (a + 1 >= tau_last) {
    RowVec v = s.rv.beta.back();
    const Matrix& a_last = s.chain.transients().back();
    for (long long n = tau_last; n < a + 1; ++n) v = v * a_last;
    const Matrix eye = Matrix::Identity(a_last.rows(), a_last.cols());
    return s.eta * linalg::solve_left(eye - a_last, v).dot(s.h);
  }
  // Head complement: tail at the final regime plus the pmf mass in
  // (a, tau_last).
  double acc = s.eta * linalg::solve_left(
                           Matrix::Identity(s.chain.state_count(),
                                            s.chain.state_count()) -
                               s.chain.transients().back(),
                           s.rv.beta.back())
                           .dot(s.h);
  RowVec v = s.chain.beta();
  std::size_t r = 0;
  for (long long n = 0; n < tau_last - 1; ++n) {
    if (r < tau.size() && n >= tau[r]) ++r;
    v = v * s.chain.transients()[r];
    if (n + 1 > a) acc += s.eta * v.dot(s.h);
  }
  return acc;
}

// E[f(AoI)] for a polynomial cost f(n) = coeffs[0] + coeffs[1] n + ...;
// the head is summed directly and the geometric tail is evaluated in
// closed form.  Degrees above 20 are rejected with the Stirling table.
inline double polynomial_cost(const AoiSolution& s,
                              const std::vector<double>& coeffs) {
  if (coeffs.empty()) return 0.0;
  const int deg = static_cast<int>(coeffs.size()) - 1;
  if (deg > 20) {
    throw std::invalid_argument("aoi: polynomial cost degree capped at 20");
  }
  const auto& tau = s.chain.thresholds();
  const long long tau_last = tau.empty() ? 0 : tau.back();
  const auto f = [&](double n) {
    double acc = 0.0;
    for (int r = deg; r >= 0; --r) acc = acc * n + coeffs[static_cast<std::size_t>(r)];
    return acc;
  };
  double acc = 0.0;
  RowVec v = s.chain.beta();
  std::size_t r = 0;
  for (long long n = 0; n + 1 < tau_last; ++n) {
    if (r < tau.size() && n >= tau[r]) ++r;
    v = v * s.chain.transients()[r];
    acc += f(static_cast<double>(n + 1)) * s.eta * v.dot(s.h);
  }
  for (int m = 0; m <= deg; ++m) {
    if (coeffs[static_cast<std::size_t>(m)] == 0.0) continue;
    acc += coeffs[static_cast<std::size_t>(m)] *
           aoi_detail::tail_power_mass(s, s.rv.beta.back(), tau_last, m);
  }
  return acc;
}

struct TailEnvelope {
  double scale = 0.0;  // |f(n)| <= scale * n^degree for all n in the tail
  int degree = 0;
};

struct CostEstimate {
  double value = 0.0;
  double truncation_bound = 0.0;
};

// E[f(AoI)] for an arbitrary cost table, summed numerically until the
// declared polynomial envelope bounds the remaining tail below tol.
inline CostEstimate general_cost(const AoiSolution& s,
                                 const std::function<double(long long)>& f,
                                 const TailEnvelope& envelope, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("aoi: tolerance must be > 0");
  if (envelope.scale < 0.0 || envelope.degree < 0 || envelope.degree > 20) {
    throw std::invalid_argument(
        "aoi: envelope needs scale >= 0 and degree in [0, 20]");
  }
  const auto& tau = s.chain.thresholds();
  const long long tau_last = tau.empty() ? 0 : tau.back();
  double acc = 0.0;
  RowVec v = s.chain.beta();
  std::size_t r = 0;
  long long n = 0;
  const long long check_stride = 64;
  for (;; ++n) {
    if (n >= tau_last && (n - tau_last) % check_stride == 0) {
      const double bound =
          envelope.scale *
          aoi_detail::tail_power_mass(s, v, n, envelope.degree);
      if (bound <= tol) return {acc, bound};
    }
    if (n > tau_last + 100000000LL) {
      throw std::runtime_error("aoi: cost summation failed to converge");
    }
    if (r < tau.size() && n >= tau[r]) ++r;
    v = v * s.chain.transients()[r];
    acc += f(n + 1) * s.eta * v.dot(s.h);
  }
}

}  // namespace agewise
