#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "agewise/aoi.hpp"
#include "agewise/opt.hpp"
#include "agewise/policy.hpp"

namespace agewise {

// Configuration rejection with the offending field path, e.g.
// "servers[1].parameters.p".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : std::runtime_error("config: " + path + ": " + message), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Objective selection as configured; a custom cost table is a CLI-level
// feature (finite support, zero beyond) and cannot drive the optimizer.
struct ObjectiveConfig {
  bool custom_table = false;
  Objective objective;
  std::vector<double> table;  // custom table, entry i is the cost of age i+1
};

inline double objective_config_value(const AoiSolution& s,
                                     const ObjectiveConfig& oc) {
  if (!oc.custom_table) return objective_value(s, oc.objective);
  const auto pmf = aoi_pmf_range(s, static_cast<long long>(oc.table.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < oc.table.size(); ++i) acc += oc.table[i] * pmf[i];
  return acc;
}

struct SimSettings {
  long long slots = 1000000;
  std::uint64_t seed = 1;
  long long warmup = 10000;
  std::optional<std::vector<long long>> scripted_services;
};

struct ExperimentConfig {
  std::vector<ServerSpec> servers;  // declared pool, in file order
  std::optional<Policy> policy;
  ObjectiveConfig objective;
  SimSettings sim;
  std::optional<SearchSpec> search;
};

namespace config_detail {

using nlohmann::json;

inline const json& member(const json& obj, const std::string& path,
                          const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ConfigError(path + "." + key, "required field is missing");
  }
  return *it;
}

inline void require_object(const json& v, const std::string& path) {
  if (!v.is_object()) throw ConfigError(path, "expected an object");
}

inline void reject_unknown_keys(const json& obj, const std::string& path,
                                std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(path + "." + it.key(), "unknown field");
  }
}

inline double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

inline long long as_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ConfigError(path, "expected an integer");
  }
  return v.get<long long>();
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

inline std::vector<double> as_double_array(const json& v,
                                           const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_double(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline std::vector<long long> as_integer_array(const json& v,
                                               const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of integers");
  std::vector<long long> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(as_integer(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline Dph parse_service(const json& server, const std::string& path) {
  const std::string type = as_string(member(server, path, "type"),
                                     path + ".type");
  const json& params = member(server, path, "parameters");
  const std::string ppath = path + ".parameters";
  require_object(params, ppath);
  try {
    if (type == "geometric") {
      reject_unknown_keys(params, ppath, {"p"});
      return Dph::geometric(as_double(member(params, ppath, "p"),
                                      ppath + ".p"));
    }
    if (type == "mixed_geometric") {
      reject_unknown_keys(params, ppath, {"p1", "p2", "w1", "w2"});
      return Dph::mixed_geometric(
          as_double(member(params, ppath, "p1"), ppath + ".p1"),
          as_double(member(params, ppath, "p2"), ppath + ".p2"),
          as_double(member(params, ppath, "w1"), ppath + ".w1"),
          as_double(member(params, ppath, "w2"), ppath + ".w2"));
    }
    if (type == "bounded_pmf") {
      reject_unknown_keys(params, ppath, {"masses", "first_value"});
      std::vector<double> masses = as_double_array(
          member(params, ppath, "masses"), ppath + ".masses");
      long long first = 1;
      if (params.contains("first_value")) {
        first = as_integer(params["first_value"], ppath + ".first_value");
        if (first < 1) {
          throw ConfigError(ppath + ".first_value", "must be >= 1");
        }
      }
      std::vector<double> padded(static_cast<std::size_t>(first - 1), 0.0);
      padded.insert(padded.end(), masses.begin(), masses.end());
      return Dph::from_bounded_pmf(std::move(padded));
    }
    if (type == "dph") {
      reject_unknown_keys(params, ppath, {"beta", "transient"});
      const std::vector<double> beta = as_double_array(
          member(params, ppath, "beta"), ppath + ".beta");
      const json& rows = member(params, ppath, "transient");
      const std::string tpath = ppath + ".transient";
      if (!rows.is_array() || rows.empty()) {
        throw ConfigError(tpath, "expected a nonempty array of rows");
      }
      const auto m = static_cast<Eigen::Index>(beta.size());
      if (static_cast<Eigen::Index>(rows.size()) != m) {
        throw ConfigError(tpath, "row count must match beta length");
      }
      RowVec b(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        b(i) = beta[static_cast<std::size_t>(i)];
      }
      Matrix a(m, m);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::string rpath = tpath + "[" + std::to_string(r) + "]";
        const std::vector<double> row = as_double_array(rows[r], rpath);
        if (static_cast<Eigen::Index>(row.size()) != m) {
          throw ConfigError(rpath, "row length must match beta length");
        }
        for (Eigen::Index c = 0; c < m; ++c) {
          a(static_cast<Eigen::Index>(r), c) = row[static_cast<std::size_t>(c)];
        }
      }
      return Dph(std::move(b), std::move(a));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(ppath, e.what());
  }
  throw ConfigError(path + ".type",
                    "unknown server type '" + type +
                        "' (expected geometric, mixed_geometric, "
                        "bounded_pmf, or dph)");
}

inline std::size_t find_server(const std::vector<ServerSpec>& servers,
                               const std::string& name,
                               const std::string& path) {
  for (std::size_t i = 0; i < servers.size(); ++i) {
    if (servers[i].name == name) return i;
  }
  throw ConfigError(path, "unknown server '" + name + "'");
}

inline ObjectiveConfig parse_objective(const json& v,
                                       const std::string& path) {
  require_object(v, path);
  ObjectiveConfig oc;
  const std::string kind = as_string(member(v, path, "kind"), path + ".kind");
  if (kind == "mean") {
    reject_unknown_keys(v, path, {"kind"});
    oc.objective.kind = Objective::Kind::mean;
  } else if (kind == "polynomial") {
    reject_unknown_keys(v, path, {"kind", "coefficients"});
    oc.objective.kind = Objective::Kind::polynomial;
    oc.objective.coefficients = as_double_array(
        member(v, path, "coefficients"), path + ".coefficients");
    if (oc.objective.coefficients.empty() ||
        oc.objective.coefficients.size() > 21) {
      throw ConfigError(path + ".coefficients",
                        "need 1 to 21 coefficients (degree at most 20)");
    }
  } else if (kind == "violation") {
    reject_unknown_keys(v, path, {"kind", "age_limit"});
    oc.objective.kind = Objective::Kind::violation;
    oc.objective.age_limit = as_integer(member(v, path, "age_limit"),
                                        path + ".age_limit");
    if (oc.objective.age_limit < 1) {
      throw ConfigError(path + ".age_limit", "must be >= 1");
    }
  } else if (kind == "custom_table" || kind == "custom-table") {
    reject_unknown_keys(v, path, {"kind", "values"});
    oc.custom_table = true;
    oc.table = as_double_array(member(v, path, "values"), path + ".values");
    if (oc.table.empty()) {
      throw ConfigError(path + ".values", "need at least one table entry");
    }
  } else {
    throw ConfigError(path + ".kind",
                      "unknown objective kind '" + kind +
                          "' (expected mean, polynomial, violation, or "
                          "custom_table)");
  }
  return oc;
}

}  // namespace config_detail

inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::string& source) {
  using config_detail::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source, e.what());
  }
  config_detail::require_object(root, source);
  config_detail::reject_unknown_keys(
      root, source, {"servers", "policy", "objective", "sim", "search"});

  ExperimentConfig cfg;

  const json& servers = config_detail::member(root, source, "servers");
  if (!servers.is_array() || servers.empty()) {
    throw ConfigError(source + ".servers",
                      "expected a nonempty array of servers");
  }
  for (std::size_t i = 0; i < servers.size(); ++i) {
    const std::string path = source + ".servers[" + std::to_string(i) + "]";
    const json& s = servers[i];
    config_detail::require_object(s, path);
    config_detail::reject_unknown_keys(s, path,
                                       {"name", "type", "parameters", "cost"});
    ServerSpec spec{
        config_detail::as_string(config_detail::member(s, path, "name"),
                                 path + ".name"),
        config_detail::parse_service(s, path),
        config_detail::as_double(config_detail::member(s, path, "cost"),
                                 path + ".cost")};
    if (spec.cost < 0.0) throw ConfigError(path + ".cost", "must be >= 0");
    for (const ServerSpec& prev : cfg.servers) {
      if (prev.name == spec.name) {
        throw ConfigError(path + ".name",
                          "duplicate server name '" + spec.name + "'");
      }
    }
    cfg.servers.push_back(std::move(spec));
  }

  if (root.contains("policy")) {
    const std::string path = source + ".policy";
    const json& pol = root["policy"];
    config_detail::require_object(pol, path);
    config_detail::reject_unknown_keys(pol, path, {"order", "thresholds"});
    const json& order = config_detail::member(pol, path, "order");
    if (!order.is_array() || order.empty()) {
      throw ConfigError(path + ".order",
                        "expected a nonempty array of server names");
    }
    std::vector<ServerSpec> play;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const std::string opath = path + ".order[" + std::to_string(i) + "]";
      play.push_back(cfg.servers[config_detail::find_server(
          cfg.servers, config_detail::as_string(order[i], opath), opath)]);
    }
    std::vector<long long> thresholds = config_detail::as_integer_array(
        config_detail::member(pol, path, "thresholds"), path + ".thresholds");
    try {
      cfg.policy.emplace(std::move(play), std::move(thresholds));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path, e.what());
    }
  }

  if (root.contains("objective")) {
    cfg.objective = config_detail::parse_objective(root["objective"],
                                                   source + ".objective");
  }

  if (root.contains("sim")) {
    const std::string path = source + ".sim";
    const json& sim = root["sim"];
    config_detail::require_object(sim, path);
    config_detail::reject_unknown_keys(
        sim, path, {"slots", "seed", "warmup", "scripted_services"});
    if (sim.contains("slots")) {
      cfg.sim.slots = config_detail::as_integer(sim["slots"], path + ".slots");
      if (cfg.sim.slots < 1) throw ConfigError(path + ".slots", "must be >= 1");
    }
    if (sim.contains("seed")) {
      const long long seed =
          config_detail::as_integer(sim["seed"], path + ".seed");
      if (seed < 0) throw ConfigError(path + ".seed", "must be >= 0");
      cfg.sim.seed = static_cast<std::uint64_t>(seed);
    }
    if (sim.contains("warmup")) {
      cfg.sim.warmup =
          config_detail::as_integer(sim["warmup"], path + ".warmup");
      if (cfg.sim.warmup < 0) {
        throw ConfigError(path + ".warmup", "must be >= 0");
      }
    }
    if (sim.contains("scripted_services")) {
      cfg.sim.scripted_services = config_detail::as_integer_array(
          sim["scripted_services"], path + ".scripted_services");
      for (long long d : *cfg.sim.scripted_services) {
        if (d < 1) {
          throw ConfigError(path + ".scripted_services",
                            "durations must be >= 1");
        }
      }
    }
  }

  if (root.contains("search")) {
    const std::string path = source + ".search";
    const json& search = root["search"];
    config_detail::require_object(search, path);
    config_detail::reject_unknown_keys(
        search, path,
        {"pool", "max_servers", "tau_max", "budgets", "objective",
         "order_by_mean"});
    SearchSpec spec;
    if (search.contains("pool")) {
      const json& pool = search["pool"];
      if (!pool.is_array() || pool.empty()) {
        throw ConfigError(path + ".pool",
                          "expected a nonempty array of server names");
      }
      for (std::size_t i = 0; i < pool.size(); ++i) {
        const std::string ppath = path + ".pool[" + std::to_string(i) + "]";
        spec.pool.push_back(cfg.servers[config_detail::find_server(
            cfg.servers, config_detail::as_string(pool[i], ppath), ppath)]);
      }
    } else {
      spec.pool = cfg.servers;
    }
    if (search.contains("max_servers")) {
      const long long ms = config_detail::as_integer(search["max_servers"],
                                                     path + ".max_servers");
      if (ms < 1 || ms > static_cast<long long>(spec.pool.size())) {
        throw ConfigError(path + ".max_servers",
                          "must be between 1 and the pool size");
      }
      spec.max_servers = static_cast<std::size_t>(ms);
    }
    if (search.contains("tau_max")) {
      spec.tau_max =
          config_detail::as_integer(search["tau_max"], path + ".tau_max");
      if (spec.tau_max < 1) {
        throw ConfigError(path + ".tau_max", "must be >= 1");
      }
    }
    spec.budgets = config_detail::as_double_array(
        config_detail::member(search, path, "budgets"), path + ".budgets");
    if (spec.budgets.empty()) {
      throw ConfigError(path + ".budgets", "need at least one budget");
    }
    for (double b : spec.budgets) {
      if (!(b >= 0.0)) throw ConfigError(path + ".budgets", "must be >= 0");
    }
    if (search.contains("objective")) {
      ObjectiveConfig oc = config_detail::parse_objective(
          search["objective"], path + ".objective");
      if (oc.custom_table) {
        throw ConfigError(path + ".objective",
                          "search objective must be mean, polynomial, or "
                          "violation");
      }
      spec.objective = oc.objective;
    } else {
      if (cfg.objective.custom_table) {
        throw ConfigError(path,
                          "a custom-table objective cannot drive the search; "
                          "set search.objective explicitly");
      }
      spec.objective = cfg.objective.objective;
    }
    if (search.contains("order_by_mean")) {
      const json& om = search["order_by_mean"];
      if (!om.is_boolean()) {
        throw ConfigError(path + ".order_by_mean", "expected a boolean");
      }
      spec.order_by_mean = om.get<bool>();
    }
    cfg.search = std::move(spec);
  }

  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, "cannot open file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

}  // namespace agewise
