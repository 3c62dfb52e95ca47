#pragma once

// Run configuration for the mclock tool.
//
// A run is a JSON object (comments allowed):
//
//   {
//     "kind": "evolve" | "diagonal-exact" | "trajectories" | "correlate" | "spectrum",
//     "model":    { "N": int, "t_hop": number, "sigma": number, "gamma": number | [N numbers] },
//     "init":     { "state": "momentum", "m": int }
//               | { "state": "uniform" }
//               | { "state": "position", "site": int (1-based) },
//     "numerics": { ...keys depending on kind, see kNumericsKeys... },
//     "master_seed": uint64,
//     "output": "directory"
//   }
//
// Unknown keys, keys not used by the chosen kind, missing required keys and out-of-range
// values are errors naming the offending key. Every default is written back into the
// resolved spec, so serialising a parsed spec and parsing it again is the identity.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mclock/core.hpp"
#include "mclock/liouville.hpp"
#include "mclock/model.hpp"

namespace mclock::cli {

using json = nlohmann::json;

enum class Kind { evolve, diagonal_exact, trajectories, correlate, spectrum };

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::evolve: return "evolve";
    case Kind::diagonal_exact: return "diagonal-exact";
    case Kind::trajectories: return "trajectories";
    case Kind::correlate: return "correlate";
    case Kind::spectrum: return "spectrum";
  }
  return "?";
}

inline Kind kind_from_string(const std::string& s) {
  for (Kind k : {Kind::evolve, Kind::diagonal_exact, Kind::trajectories, Kind::correlate, Kind::spectrum})
    if (s == to_string(k)) return k;
  throw ConfigError("kind: unknown experiment kind '" + s + "'");
}

inline bool is_stochastic(Kind k) { return k == Kind::trajectories || k == Kind::spectrum; }

struct InitSpec {
  enum class State { momentum, uniform, position };
  State state = State::momentum;
  int m = 0;     // momentum
  int site = 1;  // position, 1-based

  bool operator==(const InitSpec&) const = default;

  PureState build(int n_sites) const {
    switch (state) {
      case State::momentum: return PureState::momentum_eigenstate(n_sites, m);
      case State::uniform: return PureState::uniform_superposition(n_sites);
      case State::position: return PureState::position_eigenstate(n_sites, site - 1);
    }
    throw ConfigError("init: bad state");
  }
};

struct NumericsSpec {
  std::optional<double> t_final, dt, sample_dt, tau_max, hist_time, t_discard;
  std::optional<int> n_traj, bins, site, record_trajectories, welch_segments;
  std::optional<bool> remove_mean;
  std::optional<std::string> method;

  bool operator==(const NumericsSpec&) const = default;
};

struct RunSpec {
  Kind kind = Kind::evolve;
  ModelConfig model;
  std::optional<InitSpec> init;
  NumericsSpec numerics;
  std::optional<std::uint64_t> master_seed;
  std::string output;

  bool operator==(const RunSpec&) const = default;
};

inline const std::map<Kind, std::set<std::string>>& numerics_keys() {
  static const std::map<Kind, std::set<std::string>> keys = {
      {Kind::evolve, {"t_final", "dt", "sample_dt", "method"}},
      {Kind::diagonal_exact, {"t_final", "sample_dt"}},
      {Kind::trajectories, {"t_final", "sample_dt", "n_traj", "bins", "record_trajectories", "hist_time"}},
      {Kind::correlate, {"tau_max", "sample_dt", "dt", "site"}},
      {Kind::spectrum, {"t_final", "sample_dt", "t_discard", "remove_mean", "welch_segments"}},
  };
  return keys;
}

namespace detail {

inline void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key))
      throw ConfigError((where.empty() ? key : where + "." + key) + ": unknown key");
  }
}

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) throw ConfigError(path + ": missing required key");
  return obj.at(key);
}

inline double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  return v.get<double>();
}

inline int get_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return v.get<int>();
}

inline std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + ": expected a string");
  return v.get<std::string>();
}

inline void positive(double x, const std::string& path) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(path + ": must be > 0");
}

// Largest t_final / count not exceeding `target`.
inline double fit_interval(double t_final, double target) {
  const double count = std::max(1.0, std::ceil(t_final / target - 1e-9));
  return t_final / count;
}

inline bool is_multiple(double t, double dt) {
  const double r = t / dt;
  return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r);
}

inline void set_path(json& root, const std::string& dotted, const json& value) {
  json* node = &root;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', pos);
    const std::string part = dotted.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("override '" + dotted + "': empty key segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError("override '" + dotted + "': '" + part + "' is not an object");
    pos = dot + 1;
  }
}

}  // namespace detail

/// Applies "dotted.key=value" overrides; values are read as JSON, falling back to a string.
inline void apply_overrides(json& root, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + ov + "': expected key=value");
    const std::string key = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    detail::set_path(root, key, value);
  }
}

/// Validates a JSON run description and fills every default.
inline RunSpec resolve_runspec(const json& root) {
  using namespace detail;
  check_keys(root, "", {"kind", "model", "init", "numerics", "master_seed", "output"});
  RunSpec spec;
  spec.kind = kind_from_string(get_string(require(root, "kind", "kind"), "kind"));
  const std::string kind_name = to_string(spec.kind);

  // model
  const json& model = require(root, "model", "model");
  check_keys(model, "model", {"N", "t_hop", "sigma", "gamma"});
  spec.model.n_sites = get_int(require(model, "N", "model.N"), "model.N");
  if (spec.model.n_sites < 4) throw ConfigError("model.N: must be >= 4");
  spec.model.t_hop = get_number(require(model, "t_hop", "model.t_hop"), "model.t_hop");
  positive(spec.model.t_hop, "model.t_hop");
  spec.model.sigma = get_number(require(model, "sigma", "model.sigma"), "model.sigma");
  positive(spec.model.sigma, "model.sigma");
  const json& gamma = require(model, "gamma", "model.gamma");
  if (gamma.is_array()) {
    std::vector<double> g;
    for (std::size_t i = 0; i < gamma.size(); ++i) {
      const std::string p = "model.gamma[" + std::to_string(i) + "]";
      g.push_back(get_number(gamma[i], p));
      if (!(g.back() >= 0.0)) throw ConfigError(p + ": must be >= 0");
    }
    if (static_cast<int>(g.size()) != spec.model.n_sites)
      throw ConfigError("model.gamma: per-site list needs exactly N entries");
    spec.model.rates = Rates::per_site(std::move(g));
  } else {
    const double g = get_number(gamma, "model.gamma");
    if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("model.gamma: must be >= 0");
    spec.model.rates = Rates::uniform(g);
  }
  spec.model.validate();
  if (spec.kind != Kind::evolve && !spec.model.rates.is_uniform())
    throw ConfigError("model.gamma: kind '" + kind_name + "' requires a uniform rate");
  if (spec.kind == Kind::evolve && !spec.model.rates.is_uniform() &&
      spec.model.n_sites > DenseLiouvillian::kMaxSites)
    throw ConfigError("model.gamma: per-site rates are limited to N <= " +
                      std::to_string(DenseLiouvillian::kMaxSites));

  // init
  const bool needs_init = spec.kind != Kind::correlate;
  if (root.contains("init")) {
    if (!needs_init) throw ConfigError("init: not used by kind '" + kind_name + "'");
    const json& init = root.at("init");
    check_keys(init, "init", {"state", "m", "site"});
    const std::string state = get_string(require(init, "state", "init.state"), "init.state");
    InitSpec is;
    if (state == "momentum") {
      check_keys(init, "init", {"state", "m"});
      is.state = InitSpec::State::momentum;
      is.m = get_int(require(init, "m", "init.m"), "init.m");
      const MomentumGrid grid(spec.model.n_sites);
      if (is.m < grid.m_min() || is.m > grid.m_max())
        throw ConfigError("init.m: outside [" + std::to_string(grid.m_min()) + ", " +
                          std::to_string(grid.m_max()) + "]");
    } else if (state == "uniform") {
      check_keys(init, "init", {"state"});
      is.state = InitSpec::State::uniform;
    } else if (state == "position") {
      check_keys(init, "init", {"state", "site"});
      is.state = InitSpec::State::position;
      is.site = get_int(require(init, "site", "init.site"), "init.site");
      if (is.site < 1 || is.site > spec.model.n_sites)
        throw ConfigError("init.site: must be in [1, N]");
    } else {
      throw ConfigError("init.state: expected momentum, uniform or position");
    }
    spec.init = is;
  } else if (needs_init) {
    throw ConfigError("init: missing required key");
  }

  // seed
  if (root.contains("master_seed")) {
    const json& s = root.at("master_seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      throw ConfigError("master_seed: expected a non-negative integer");
    spec.master_seed = s.get<std::uint64_t>();
  } else if (is_stochastic(spec.kind)) {
    throw ConfigError("master_seed: required for kind '" + kind_name + "'");
  }

  if (root.contains("output")) spec.output = get_string(root.at("output"), "output");

  // numerics
  const json empty = json::object();
  const json& num = root.contains("numerics") ? root.at("numerics") : empty;
  const auto& allowed = numerics_keys().at(spec.kind);
  if (!num.is_object()) throw ConfigError("numerics: expected an object");
  for (const auto& [key, value] : num.items()) {
    (void)value;
    if (!allowed.count(key)) {
      static const std::set<std::string> all = {"t_final", "dt", "sample_dt", "tau_max", "hist_time",
                                                "t_discard", "n_traj", "bins", "site",
                                                "record_trajectories", "welch_segments",
                                                "remove_mean", "method"};
      throw ConfigError("numerics." + key +
                        (all.count(key) ? ": not used by kind '" + kind_name + "'" : ": unknown key"));
    }
  }
  NumericsSpec& n = spec.numerics;
  auto num_opt = [&](const char* key) -> std::optional<double> {
    if (!num.contains(key)) return std::nullopt;
    return get_number(num.at(key), std::string("numerics.") + key);
  };
  auto int_opt = [&](const char* key) -> std::optional<int> {
    if (!num.contains(key)) return std::nullopt;
    return get_int(num.at(key), std::string("numerics.") + key);
  };

  const double dt_rule = default_time_step(spec.model);
  if (spec.kind == Kind::correlate) {
    if (!num.contains("tau_max")) throw ConfigError("numerics.tau_max: missing required key");
    n.tau_max = num_opt("tau_max");
    positive(*n.tau_max, "numerics.tau_max");
    n.sample_dt = num_opt("sample_dt").value_or(fit_interval(*n.tau_max, *n.tau_max / 1000.0));
  } else {
    if (!num.contains("t_final")) throw ConfigError("numerics.t_final: missing required key");
    n.t_final = num_opt("t_final");
    positive(*n.t_final, "numerics.t_final");
    double target = *n.t_final / 100.0;
    if (spec.kind == Kind::spectrum) target = spec.model.clock_period() / 20.0;
    n.sample_dt = num_opt("sample_dt").value_or(fit_interval(*n.t_final, target));
  }
  positive(*n.sample_dt, "numerics.sample_dt");
  const double span = n.t_final ? *n.t_final : *n.tau_max;
  if (!is_multiple(span, *n.sample_dt))
    throw ConfigError("numerics.sample_dt: must divide the run length exactly");

  if (allowed.count("dt")) {
    n.dt = num_opt("dt").value_or(dt_rule);
    positive(*n.dt, "numerics.dt");
  }
  if (allowed.count("method")) {
    n.method = num.contains("method") ? get_string(num.at("method"), "numerics.method") : "rk4";
    if (*n.method != "rk4") throw ConfigError("numerics.method: only 'rk4' is available");
  }
  if (spec.kind == Kind::trajectories) {
    if (!num.contains("n_traj")) throw ConfigError("numerics.n_traj: missing required key");
    n.n_traj = int_opt("n_traj");
    if (*n.n_traj < 1) throw ConfigError("numerics.n_traj: must be >= 1");
    n.bins = int_opt("bins").value_or(40);
    if (*n.bins < 1) throw ConfigError("numerics.bins: must be >= 1");
    n.record_trajectories = int_opt("record_trajectories").value_or(1);
    if (*n.record_trajectories < 0 || *n.record_trajectories > *n.n_traj)
      throw ConfigError("numerics.record_trajectories: must be in [0, n_traj]");
    n.hist_time = num_opt("hist_time").value_or(*n.t_final);
    if (*n.hist_time < 0.0 || *n.hist_time > *n.t_final + 1e-12 || !is_multiple(*n.hist_time, *n.sample_dt))
      throw ConfigError("numerics.hist_time: must be a sample time in [0, t_final]");
  }
  if (spec.kind == Kind::correlate) {
    n.site = int_opt("site").value_or(1);
    if (*n.site < 1 || *n.site > spec.model.n_sites) throw ConfigError("numerics.site: must be in [1, N]");
  }
  if (spec.kind == Kind::spectrum) {
    n.t_discard = num_opt("t_discard").value_or(0.0);
    if (*n.t_discard < 0.0 || *n.t_discard >= *n.t_final)
      throw ConfigError("numerics.t_discard: must be in [0, t_final)");
    if (num.contains("remove_mean")) {
      if (!num.at("remove_mean").is_boolean()) throw ConfigError("numerics.remove_mean: expected a boolean");
      n.remove_mean = num.at("remove_mean").get<bool>();
    } else {
      n.remove_mean = true;
    }
    n.welch_segments = int_opt("welch_segments").value_or(1);
    if (*n.welch_segments < 1) throw ConfigError("numerics.welch_segments: must be >= 1");
  }
  return spec;
}

inline RunSpec parse_runspec(std::string_view text, const std::vector<std::string>& overrides = {}) {
  json root = json::parse(text, nullptr, false, true);
  if (root.is_discarded()) throw ConfigError("config: not valid JSON");
  apply_overrides(root, overrides);
  return resolve_runspec(root);
}

inline json to_json(const RunSpec& spec) {
  json root;
  root["kind"] = to_string(spec.kind);
  json model;
  model["N"] = spec.model.n_sites;
  model["t_hop"] = spec.model.t_hop;
  model["sigma"] = spec.model.sigma;
  if (spec.model.rates.is_uniform())
    model["gamma"] = spec.model.rates.uniform_value();
  else
    model["gamma"] = spec.model.rates.per_site_values();
  root["model"] = model;
  if (spec.init) {
    json init;
    switch (spec.init->state) {
      case InitSpec::State::momentum:
        init["state"] = "momentum";
        init["m"] = spec.init->m;
        break;
      case InitSpec::State::uniform: init["state"] = "uniform"; break;
      case InitSpec::State::position:
        init["state"] = "position";
        init["site"] = spec.init->site;
        break;
    }
    root["init"] = init;
  }
  json num = json::object();
  const NumericsSpec& n = spec.numerics;
  auto put = [&](const char* key, const auto& opt) {
    if (opt) num[key] = *opt;
  };
  put("t_final", n.t_final);
  put("tau_max", n.tau_max);
  put("dt", n.dt);
  put("sample_dt", n.sample_dt);
  put("method", n.method);
  put("n_traj", n.n_traj);
  put("bins", n.bins);
  put("record_trajectories", n.record_trajectories);
  put("hist_time", n.hist_time);
  put("site", n.site);
  put("t_discard", n.t_discard);
  put("remove_mean", n.remove_mean);
  put("welch_segments", n.welch_segments);
  root["numerics"] = num;
  if (spec.master_seed) root["master_seed"] = *spec.master_seed;
  if (!spec.output.empty()) root["output"] = spec.output;
  return root;
}

inline std::string serialize(const RunSpec& spec) { return to_json(spec).dump(2); }

}  // namespace mclock::cli
