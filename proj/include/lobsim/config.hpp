#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lobsim/curves.hpp"
#include "lobsim/engine.hpp"
#include "lobsim/error.hpp"
#include "lobsim/theory.hpp"

namespace lobsim {

struct ModelConfig {
  DemandSupplyPair pair = uniform_pair();
  double rho = 0.0;
  std::string preset = "uniform";  // "custom" when curves are given explicitly
  std::optional<int> evenodd_n;    // set for the evenodd preset
};

// J given directly or as J(V).
struct RestrictionSpec {
  std::optional<PriceInterval> interval;
  std::optional<double> volume;
};

struct BookSpec {
  std::vector<std::pair<double, std::uint64_t>> buys;
  std::vector<std::pair<double, std::uint64_t>> sells;
};

struct RunConfig {
  std::uint64_t events = 10000;
  std::optional<double> time;
  std::optional<std::uint64_t> seed;
  std::size_t replicas = 1;
  std::size_t threads = 0;  // 0: hardware concurrency
  double burn_in = 0.5;
  std::optional<RestrictionSpec> restriction;
  std::optional<BookSpec> initial_book;
  bool discrete_map = false;  // ψ(x) = ⌈x/2⌉ image; evenodd preset only
  std::optional<double> freeze_eps;        // default 0.01 |I|
  std::optional<std::size_t> freeze_window; // default 10% of the horizon
  std::size_t cdf_points = 1024;
};

struct OutputConfig {
  std::string directory = "out";
  bool trajectory = true;
  std::vector<std::uint64_t> snapshots;
  std::size_t histogram_bins = 100;
  std::size_t grid_size = 4096;
  std::size_t phi_samples = 64;
};

struct SweepConfig {
  std::vector<double> rho;
  std::vector<double> volume;
  bool simulate = false;
};

struct TheoryConfig {
  std::optional<double> luckock_volume;  // J(V) for the f± export; default inside J(V_L)
};

struct CompareConfig {
  double sup_tolerance = 0.05;
  double empty_tolerance = 0.02;
};

struct FreezeConfig {
  std::optional<double> gambler_y;
  std::size_t bins = 5;
};

struct ExperimentConfig {
  ModelConfig model;
  RunConfig run;
  OutputConfig output;
  std::optional<SweepConfig> sweep;
  TheoryConfig theory;
  CompareConfig compare;
  FreezeConfig freeze;
};

namespace config_detail {

using nlohmann::json;

inline void only_keys(const json& j, const std::string& where,
                      std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw config_error(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw config_error("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw config_error(where + "." + key + ": " + e.what());
  }
}

template <class T>
void maybe(const json& j, const char* key, const std::string& where, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = get<T>(j, key, where);
}

template <class T>
void maybe(const json& j, const char* key, const std::string& where, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = get<T>(j, key, where);
}

inline std::vector<Breakpoint> breakpoints(const json& j, const std::string& where) {
  if (!j.is_array()) throw config_error(where + " must be a list of [price, rate] pairs");
  std::vector<Breakpoint> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
      throw config_error(where + " entries must be [price, rate] number pairs");
    }
    out.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  return out;
}

inline PriceInterval interval(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw config_error(where + " must be [lo, hi]");
  }
  try {
    return PriceInterval(j[0].get<double>(), j[1].get<double>());
  } catch (const argument_error& e) {
    throw config_error(where + ": " + e.what());
  }
}

inline ModelConfig parse_model(const json& j) {
  const std::string w = "model";
  only_keys(j, w, {"preset", "n", "alpha", "segments", "interval", "demand", "supply", "rho"});
  ModelConfig m;
  maybe(j, "rho", w, m.rho);
  if (!(m.rho >= 0.0)) throw config_error("model.rho must be >= 0");
  const bool custom = j.contains("demand") || j.contains("supply");
  std::string preset = custom ? "custom" : "uniform";
  maybe(j, "preset", w, preset);
  if (custom != (preset == "custom")) {
    throw config_error("model: give either a preset or both demand and supply curves");
  }
  m.preset = preset;
  if (preset == "uniform") {
    m.pair = uniform_pair();
  } else if (preset == "evenodd") {
    int n = 3;
    maybe(j, "n", w, n);
    if (n < 1) throw config_error("model.n must be >= 1");
    m.evenodd_n = n;
    m.pair = evenodd_pair(n);
  } else if (preset == "power") {
    double alpha = 1.0;
    int segments = 400;
    maybe(j, "alpha", w, alpha);
    maybe(j, "segments", w, segments);
    try {
      m.pair = power_pair(alpha, segments);
    } catch (const argument_error& e) {
      throw config_error(std::string("model: ") + e.what());
    }
  } else if (preset == "custom") {
    if (!j.contains("demand") || !j.contains("supply")) {
      throw config_error("model: custom curves need both demand and supply");
    }
    // Curve-shape failures surface as assumption errors from the constructors.
    try {
      m.pair = DemandSupplyPair(MonotoneCurve::demand(breakpoints(j["demand"], "model.demand")),
                                MonotoneCurve::supply(breakpoints(j["supply"], "model.supply")));
    } catch (const argument_error& e) {
      throw config_error(std::string("model: ") + e.what());
    }
  } else {
    throw config_error("model.preset must be uniform, evenodd, power or custom");
  }
  if (j.contains("interval") && !(interval(j["interval"], "model.interval") == m.pair.interval())) {
    throw config_error("model.interval does not match the curve breakpoints");
  }
  return m;
}

inline BookSpec parse_book(const json& j) {
  const std::string w = "run.initial_book";
  only_keys(j, w, {"buys", "sells"});
  BookSpec b;
  for (const char* side : {"buys", "sells"}) {
    if (!j.contains(side)) continue;
    auto& dst = std::string(side) == "buys" ? b.buys : b.sells;
    for (const auto& e : j[side]) {
      if (e.is_number()) {
        dst.emplace_back(e.get<double>(), 1);
      } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number_unsigned()) {
        dst.emplace_back(e[0].get<double>(), e[1].get<std::uint64_t>());
      } else {
        throw config_error(w + "." + side + " entries must be a price or [price, count]");
      }
    }
  }
  return b;
}

inline RunConfig parse_run(const json& j) {
  const std::string w = "run";
  only_keys(j, w, {"events", "time", "seed", "replicas", "threads", "burn_in", "restriction",
                   "initial_book", "discrete_map", "freeze_eps", "freeze_window", "cdf_points"});
  RunConfig r;
  maybe(j, "events", w, r.events);
  maybe(j, "time", w, r.time);
  maybe(j, "seed", w, r.seed);
  maybe(j, "replicas", w, r.replicas);
  maybe(j, "threads", w, r.threads);
  maybe(j, "burn_in", w, r.burn_in);
  maybe(j, "freeze_eps", w, r.freeze_eps);
  maybe(j, "freeze_window", w, r.freeze_window);
  maybe(j, "cdf_points", w, r.cdf_points);
  if (j.contains("restriction") && !j["restriction"].is_null()) {
    const json& rj = j["restriction"];
    RestrictionSpec spec;
    if (rj.is_object()) {
      only_keys(rj, "run.restriction", {"volume"});
      spec.volume = get<double>(rj, "volume", "run.restriction");
    } else {
      spec.interval = interval(rj, "run.restriction");
    }
    r.restriction = spec;
  }
  if (j.contains("initial_book") && !j["initial_book"].is_null()) {
    r.initial_book = parse_book(j["initial_book"]);
  }
  if (j.contains("discrete_map") && !j["discrete_map"].is_null()) {
    const std::string m = get<std::string>(j, "discrete_map", w);
    if (m != "ceil_half") throw config_error("run.discrete_map must be \"ceil_half\"");
    r.discrete_map = true;
  }
  if (r.replicas == 0) throw config_error("run.replicas must be >= 1");
  if (!(r.burn_in >= 0.0 && r.burn_in < 1.0)) throw config_error("run.burn_in must lie in [0, 1)");
  if (r.time && !(*r.time >= 0.0)) throw config_error("run.time must be >= 0");
  if (r.freeze_eps && !(*r.freeze_eps > 0.0)) throw config_error("run.freeze_eps must be > 0");
  if (r.freeze_window && *r.freeze_window == 0) throw config_error("run.freeze_window must be > 0");
  if (r.cdf_points < 2) throw config_error("run.cdf_points must be >= 2");
  return r;
}

inline OutputConfig parse_output(const json& j) {
  const std::string w = "output";
  only_keys(j, w, {"directory", "trajectory", "snapshots", "histogram_bins", "grid_size",
                   "phi_samples"});
  OutputConfig o;
  maybe(j, "directory", w, o.directory);
  maybe(j, "trajectory", w, o.trajectory);
  maybe(j, "snapshots", w, o.snapshots);
  maybe(j, "histogram_bins", w, o.histogram_bins);
  maybe(j, "grid_size", w, o.grid_size);
  maybe(j, "phi_samples", w, o.phi_samples);
  if (o.histogram_bins == 0) throw config_error("output.histogram_bins must be >= 1");
  if (o.grid_size < 64) throw config_error("output.grid_size must be >= 64");
  if (o.phi_samples < 2) throw config_error("output.phi_samples must be >= 2");
  return o;
}

inline SweepConfig parse_sweep(const json& j) {
  const std::string w = "sweep";
  only_keys(j, w, {"rho", "volume", "simulate"});
  SweepConfig s;
  maybe(j, "rho", w, s.rho);
  maybe(j, "volume", w, s.volume);
  maybe(j, "simulate", w, s.simulate);
  if (s.rho.empty() && s.volume.empty()) throw config_error("sweep needs a rho or volume list");
  for (double r : s.rho) {
    if (!(r >= 0.0)) throw config_error("sweep.rho values must be >= 0");
  }
  return s;
}

}  // namespace config_detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace config_detail;
  only_keys(j, "config", {"model", "run", "output", "sweep", "theory", "compare", "freeze"});
  ExperimentConfig c;
  if (j.contains("model")) c.model = parse_model(j["model"]);
  if (j.contains("run")) c.run = parse_run(j["run"]);
  if (j.contains("output")) c.output = parse_output(j["output"]);
  if (j.contains("sweep") && !j["sweep"].is_null()) c.sweep = parse_sweep(j["sweep"]);
  if (j.contains("theory")) {
    only_keys(j["theory"], "theory", {"luckock_volume"});
    maybe(j["theory"], "luckock_volume", "theory", c.theory.luckock_volume);
  }
  if (j.contains("compare")) {
    only_keys(j["compare"], "compare", {"sup_tolerance", "empty_tolerance"});
    maybe(j["compare"], "sup_tolerance", "compare", c.compare.sup_tolerance);
    maybe(j["compare"], "empty_tolerance", "compare", c.compare.empty_tolerance);
  }
  if (j.contains("freeze")) {
    only_keys(j["freeze"], "freeze", {"gambler_y", "bins"});
    maybe(j["freeze"], "gambler_y", "freeze", c.freeze.gambler_y);
    maybe(j["freeze"], "bins", "freeze", c.freeze.bins);
    if (c.freeze.bins == 0) throw config_error("freeze.bins must be >= 1");
  }
  if (c.run.discrete_map && !c.model.evenodd_n) {
    throw config_error("run.discrete_map needs the evenodd preset");
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

/// The price interval J named by a restriction spec.
inline PriceInterval resolve_restriction(const ExperimentConfig& c, const RestrictionSpec& spec) {
  if (spec.interval) {
    if (!c.model.pair.interval().contains(*spec.interval)) {
      throw config_error("run.restriction must lie inside the model interval");
    }
    return *spec.interval;
  }
  const double v = *spec.volume;
  if (!(v > 0.0 && v <= c.model.pair.v_max())) {
    throw config_error("run.restriction.volume must lie in (0, V_max]");
  }
  const PriceInterval j = window_for_volume(c.model.pair, v);
  return j;
}

/// Engine config for one replica.
inline SimConfig make_sim_config(const ExperimentConfig& c, std::uint64_t seed) {
  SimConfig s{c.model.pair};
  s.rho = c.model.rho;
  s.horizon_events = c.run.events;
  s.horizon_time = c.run.time;
  s.seed = seed;
  s.burn_in = c.run.burn_in;
  s.snapshot_at = c.output.snapshots;
  s.record_events = true;
  s.cdf_points = c.run.cdf_points;
  if (c.run.restriction) s.restriction = resolve_restriction(c, *c.run.restriction);
  if (c.run.initial_book) {
    OrderBook book(s.restriction.value_or(c.model.pair.interval()));
    try {
      for (const auto& [p, n] : c.run.initial_book->buys) book.place(Side::buy, p, n);
      for (const auto& [p, n] : c.run.initial_book->sells) book.place(Side::sell, p, n);
    } catch (const argument_error& e) {
      throw config_error(std::string("run.initial_book: ") + e.what());
    }
    s.initial_book = std::move(book);
  }
  return s;
}

}  // namespace lobsim
