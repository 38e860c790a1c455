#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "agewise/dph.hpp"

namespace agewise {

struct ServerSpec {
  std::string name;
  Dph service;
  double cost = 0.0;
};

// Age-dependent server selection policy: when the source decides to
// transmit at instantaneous age n it uses server j for n in the half-open
// band [tau_j, tau_{j+1}), waits while n < tau_1, and uses the last server
// for all n >= tau_J.  tau_1 may equal tau_2, which makes server 1's band
// empty (the server is configured but never selected); all later
// thresholds must strictly increase.
class Policy {
 public:
  Policy(std::vector<ServerSpec> servers, std::vector<long long> thresholds)
      : servers_(std::move(servers)), thresholds_(std::move(thresholds)) {
    if (servers_.empty()) {
      throw std::invalid_argument("policy: at least one server required");
    }
    if (thresholds_.size() != servers_.size()) {
      throw std::invalid_argument(
          "policy: need exactly one threshold per server");
    }
    if (thresholds_.front() < 1) {
      throw std::invalid_argument("policy: first threshold must be >= 1");
    }
    for (std::size_t j = 1; j < thresholds_.size(); ++j) {
      bool ok = j == 1 ? thresholds_[j] >= thresholds_[j - 1]
                       : thresholds_[j] > thresholds_[j - 1];
      if (!ok) {
        throw std::invalid_argument(
            "policy: thresholds must satisfy tau_1 <= tau_2 < tau_3 < ...");
      }
    }
    for (const ServerSpec& s : servers_) {
      if (s.cost < 0.0 || !std::isfinite(s.cost)) {
        throw std::invalid_argument("policy: server cost must be >= 0");
      }
    }
  }

  std::size_t server_count() const { return servers_.size(); }
  const std::vector<ServerSpec>& servers() const { return servers_; }
  const std::vector<long long>& thresholds() const { return thresholds_; }
  long long wait_threshold() const { return thresholds_.front(); }
  long long last_threshold() const { return thresholds_.back(); }

  // Zero-based index of the server whose band contains age n; requires
  // n >= tau_1.  With a tied tau_1 == tau_2 the second server wins, which
  // is what makes the first band empty.
  std::size_t server_for_age(long long n) const {
    if (n < thresholds_.front()) {
      throw std::invalid_argument("policy: age below the wait threshold");
    }
    std::size_t j = 0;
    while (j + 1 < thresholds_.size() && n >= thresholds_[j + 1]) ++j;
    return j;
  }

  // Age at which a transmission triggered at age n actually starts.
  long long start_age(long long n) const {
    return n < thresholds_.front() ? thresholds_.front() : n;
  }

 private:
  std::vector<ServerSpec> servers_;
  std::vector<long long> thresholds_;
};

}  // namespace agewise
