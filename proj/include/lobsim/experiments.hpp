#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lobsim/config.hpp"
#include "lobsim/engine.hpp"
#include "lobsim/io.hpp"
#include "lobsim/theory.hpp"

namespace lobsim {

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0: hardware
/// concurrency). Results land at their index, so output order never depends on
/// scheduling. The first exception thrown is rethrown after all workers join.
template <class F>
auto parallel_map(std::size_t n, std::size_t threads, F&& fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<std::optional<R>> slots(n);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

namespace experiments_detail {

inline std::string replica_dir(std::size_t r, std::size_t replicas) {
  if (replicas == 1) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "replica_%03zu/", r);
  return buf;
}

inline std::uint64_t require_seed(const ExperimentConfig& c) {
  if (!c.run.seed) throw config_error("a seed is required (run.seed or --seed)");
  return *c.run.seed;
}

inline io::FreezeParams freeze_params(const ExperimentConfig& c, const Trajectory& tr) {
  const double eps = c.run.freeze_eps.value_or(0.01 * c.model.pair.interval().length());
  const std::size_t fallback = std::max<std::size_t>(1, tr.records.size() / 10);
  return {eps, c.run.freeze_window.value_or(fallback)};
}

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace experiments_detail

// theory

struct TheoryResult {
  WindowReport window;
  std::optional<LuckockSolution> luckock;
  io::Artifacts artifacts;
};

inline TheoryResult cmd_theory(const ExperimentConfig& c) {
  const auto& pair = c.model.pair;
  const double rho = c.model.rho;
  TheoryResult res;
  res.window = v_l(pair, rho);

  nlohmann::json j;
  j["schema_version"] = io::kSchemaVersion;
  const AssumptionReport a = pair.assumptions();
  j["assumptions"] = {{"A1", a.a1}, {"A2", a.a2}, {"A3", a.a3},
                      {"A4", a.a4}, {"A5", a.a5}, {"A6", a.a6}};
  j["window_report"] = io::to_json(res.window);
  if (!res.window.degenerate) {
    j["phi"] = io::to_json(phi_table(pair, rho, c.output.phi_samples));
    // The f± export stays strictly inside J(V_L), where the law is known to exist.
    const double v = c.theory.luckock_volume.value_or(res.window.v_w +
                                                      0.95 * (res.window.v_l - res.window.v_w));
    if (!(v > res.window.v_w && v < res.window.v_max_effective)) {
      throw config_error("theory.luckock_volume must lie in (V_W, effective V_max)");
    }
    res.luckock = solve_luckock(pair, rho, window_for_volume(pair, v), c.output.grid_size);
    auto lj = io::to_json(*res.luckock);
    lj["volume"] = v;
    lj["recurrence"] = to_string(classify_recurrence(pair, rho, v));
    j["luckock"] = std::move(lj);
    res.artifacts.add("luckock.csv", io::luckock_csv(*res.luckock));
  }
  res.artifacts.add("theory.json", io::dump(j));
  return res;
}

// simulate

struct SimulateResult {
  std::vector<Trajectory> trajectories;
  io::Artifacts artifacts;
};

inline SimulateResult cmd_simulate(const ExperimentConfig& c) {
  using namespace experiments_detail;
  const std::uint64_t master = require_seed(c);
  const std::size_t reps = c.run.replicas;
  std::optional<DiscreteMap> psi;
  if (c.run.discrete_map) psi = DiscreteMap::ceil_half(*c.model.evenodd_n);

  // Each replica renders its own files; the caller writes them after the join.
  struct Replica {
    Trajectory tr;
    io::Artifacts files;
  };
  auto replicas = parallel_map(reps, c.run.threads, [&](std::size_t r) {
    Replica out;
    out.tr = run(make_sim_config(c, replica_seed(master, r)));
    const std::string dir = replica_dir(r, reps);
    if (c.output.trajectory) out.files.add(dir + "trajectory.csv", io::trajectory_csv(out.tr));
    auto summary = io::summary_json(out.tr, freeze_params(c, out.tr));
    summary["seed"] = replica_seed(master, r);
    out.files.add(dir + "summary.json", io::dump(summary));
    out.files.add(dir + "histogram.csv", io::histogram_csv(out.tr.final_book, c.output.histogram_bins));
    for (const auto& [n, book] : out.tr.snapshots) {
      const std::string tag = std::to_string(n);
      out.files.add(dir + "snapshot_" + tag + ".csv", snapshot_csv(book));
      out.files.add(dir + "histogram_" + tag + ".csv", io::histogram_csv(book, c.output.histogram_bins));
      if (psi) out.files.add(dir + "image_" + tag + ".csv", snapshot_csv(image_book(book, *psi)));
    }
    if (psi) out.files.add(dir + "image_final.csv", snapshot_csv(image_book(out.tr.final_book, *psi)));
    return out;
  });

  SimulateResult res;
  for (auto& r : replicas) {
    for (auto& f : r.files.files) res.artifacts.files.push_back(std::move(f));
    res.trajectories.push_back(std::move(r.tr));
  }
  return res;
}

// compare

struct ComparisonReport {
  PriceInterval window{0.0, 1.0};
  std::optional<double> volume;
  double sup_bid = 0.0;  // sup |empirical P[bid <= x] − f−(x)|
  double sup_ask = 0.0;  // sup |empirical P[ask >= x] − f+(x)|
  double empty_buy_empirical = 0.0;
  double empty_buy_theory = 0.0;
  double empty_sell_empirical = 0.0;
  double empty_sell_theory = 0.0;
  std::uint64_t empty_returns = 0;
  std::optional<WindowEstimate> window_estimate;
  double sup_tolerance = 0.05;
  double empty_tolerance = 0.02;
  bool pass = false;
};

struct CompareResult {
  ComparisonReport report;
  io::Artifacts artifacts;
};

/// Raised when the restricted model on J is not positive recurrent.
class not_recurrent_error : public config_error {
 public:
  explicit not_recurrent_error(const std::string& what) : config_error(what) {}
};

inline CompareResult cmd_compare(const ExperimentConfig& c) {
  using namespace experiments_detail;
  const std::uint64_t master = require_seed(c);
  if (!c.run.restriction) throw config_error("compare needs run.restriction");
  const auto& pair = c.model.pair;
  const double rho = c.model.rho;
  const PriceInterval j = resolve_restriction(c, *c.run.restriction);

  ComparisonReport rep;
  rep.window = j;
  rep.volume = c.run.restriction->volume;
  if (rep.volume) {
    const Recurrence rec = classify_recurrence(pair, rho, *rep.volume);
    if (rec != Recurrence::positive_recurrent) {
      throw not_recurrent_error(
          "refusing to compare on J(" + format_double(*rep.volume) + "): the restricted model is " +
          to_string(rec) + " (Phi(V) is not below 1/(V_W - rho)^2), so no stationary law exists");
    }
  }
  const LuckockSolution sol = solve_luckock(pair, rho, j, c.output.grid_size);
  if (sol.negative_edge) {
    throw not_recurrent_error(
        "refusing to compare on J: the Luckock solution has a negative edge value, so the "
        "restricted model is not positive recurrent");
  }

  auto trs = parallel_map(c.run.replicas, c.run.threads, [&](std::size_t r) {
    SimConfig s = make_sim_config(c, replica_seed(master, r));
    s.record_events = true;
    return run(s);
  });

  // Pool the replicas, weighting each by its observed time.
  const std::size_t m = trs.front().bid_time.size();
  std::vector<double> bid(m, 0.0), ask(m, 0.0);
  double total = 0.0, no_buys = 0.0, no_sells = 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& tr : trs) {
    const auto bc = tr.bid_time.cdf();
    const auto as = tr.ask_time.survival();
    for (std::size_t k = 0; k < m; ++k) {
      bid[k] += bc[k] * tr.observed_time;
      ask[k] += as[k] * tr.observed_time;
    }
    total += tr.observed_time;
    no_buys += tr.time_without_buys;
    no_sells += tr.time_without_sells;
    rep.empty_returns += tr.empty_returns;
    try {
      const WindowEstimate w = estimate_window(tr);
      lo = std::min(lo, w.lo);
      hi = std::max(hi, w.hi);
    } catch (const insufficient_data_error&) {
    }
  }
  if (!(total > 0.0)) throw insufficient_data_error("compare: no post-burn-in time observed");
  if (std::isfinite(lo) && std::isfinite(hi)) rep.window_estimate = WindowEstimate{lo, hi};

  std::string csv = "price,bid_cdf_empirical,f_minus,ask_survival_empirical,f_plus\n";
  for (std::size_t k = 0; k < m; ++k) {
    bid[k] /= total;
    ask[k] /= total;
    const double x = trs.front().bid_time.point(k);
    const double fm = sol.f_minus_at(x);
    const double fp = sol.f_plus_at(x);
    rep.sup_bid = std::max(rep.sup_bid, std::abs(bid[k] - fm));
    rep.sup_ask = std::max(rep.sup_ask, std::abs(ask[k] - fp));
    csv += format_double(x) + "," + format_double(bid[k]) + "," + format_double(fm) + "," +
           format_double(ask[k]) + "," + format_double(fp) + "\n";
  }
  rep.empty_buy_empirical = no_buys / total;
  rep.empty_sell_empirical = no_sells / total;
  rep.empty_buy_theory = sol.edge_minus;
  rep.empty_sell_theory = sol.edge_plus;
  rep.sup_tolerance = c.compare.sup_tolerance;
  rep.empty_tolerance = c.compare.empty_tolerance;
  rep.pass = rep.sup_bid <= rep.sup_tolerance && rep.sup_ask <= rep.sup_tolerance &&
             std::abs(rep.empty_buy_empirical - rep.empty_buy_theory) <= rep.empty_tolerance &&
             std::abs(rep.empty_sell_empirical - rep.empty_sell_theory) <= rep.empty_tolerance;

  nlohmann::json jr;
  jr["schema_version"] = io::kSchemaVersion;
  jr["window"] = io::to_json(j);
  jr["volume"] = rep.volume ? nlohmann::json(*rep.volume) : nlohmann::json(nullptr);
  jr["rho"] = rho;
  jr["replicas"] = trs.size();
  jr["sup_distance_bid"] = rep.sup_bid;
  jr["sup_distance_ask"] = rep.sup_ask;
  jr["empty_buy"] = {{"empirical", rep.empty_buy_empirical}, {"theory", rep.empty_buy_theory}};
  jr["empty_sell"] = {{"empirical", rep.empty_sell_empirical}, {"theory", rep.empty_sell_theory}};
  jr["empty_returns"] = rep.empty_returns;
  jr["window_estimate"] = rep.window_estimate
                              ? nlohmann::json{{"lo", rep.window_estimate->lo},
                                               {"hi", rep.window_estimate->hi}}
                              : nlohmann::json(nullptr);
  jr["tolerances"] = {{"sup", rep.sup_tolerance}, {"empty", rep.empty_tolerance}};
  jr["pass"] = rep.pass;

  CompareResult res;
  res.report = rep;
  res.artifacts.add("compare.csv", std::move(csv));
  res.artifacts.add("compare.json", io::dump(jr));
  res.artifacts.add("luckock.csv", io::luckock_csv(sol));
  return res;
}

// freeze

struct FreezeReplica {
  std::uint64_t seed = 0;
  std::optional<FreezeRecord> freeze;
  double final_bid = 0.0;
  double final_ask = 0.0;
};

struct GamblerReport {
  double y = 0.0;
  double bound = 0.0;
  std::size_t replicas = 0;
  std::size_t never_dropped = 0;
  double fraction() const noexcept {
    return replicas ? static_cast<double>(never_dropped) / static_cast<double>(replicas) : 0.0;
  }
};

struct FreezeReport {
  std::vector<FreezeReplica> replicas;
  std::size_t frozen = 0;
  std::vector<double> midpoints;  // frozen replicas only, in replica order
  double mean = 0.0;
  double stddev = 0.0;
  std::optional<FreezeSupport> support;
  std::optional<GamblerReport> gambler;

  double frozen_fraction() const noexcept {
    return replicas.empty() ? 0.0
                            : static_cast<double>(frozen) / static_cast<double>(replicas.size());
  }
};

struct FreezeResult {
  FreezeReport report;
  io::Artifacts artifacts;
};

inline GamblerReport gambler_scenario(const ExperimentConfig& c, double y, std::uint64_t master) {
  GamblerReport g;
  g.y = y;
  g.bound = gambler_bound(c.model.pair, c.model.rho, y);
  g.replicas = c.run.replicas;
  const auto kept = parallel_map(c.run.replicas, c.run.threads, [&](std::size_t r) {
    SimConfig s = make_sim_config(c, replica_seed(master ^ 0x6A09E667F3BCC909ULL, r));
    OrderBook start(s.restriction.value_or(c.model.pair.interval()));
    start.place(Side::buy, y);
    s.initial_book = std::move(start);
    s.record_events = false;
    s.snapshot_at.clear();
    return run(s).min_bid >= y;
  });
  g.never_dropped = static_cast<std::size_t>(std::count(kept.begin(), kept.end(), true));
  return g;
}

inline FreezeResult cmd_freeze(const ExperimentConfig& c) {
  using namespace experiments_detail;
  const std::uint64_t master = require_seed(c);
  FreezeReport rep;
  rep.replicas = parallel_map(c.run.replicas, c.run.threads, [&](std::size_t r) {
    SimConfig s = make_sim_config(c, replica_seed(master, r));
    s.snapshot_at.clear();
    const Trajectory tr = run(s);
    const io::FreezeParams fp = freeze_params(c, tr);
    FreezeReplica out;
    out.seed = s.seed;
    out.freeze = detect_freeze(tr, fp.eps, fp.window);
    out.final_bid = tr.final_book.bid();
    out.final_ask = tr.final_book.ask();
    return out;
  });
  for (const auto& r : rep.replicas) {
    if (r.freeze) {
      ++rep.frozen;
      rep.midpoints.push_back(r.freeze->midpoint);
    }
  }
  rep.mean = mean(rep.midpoints);
  rep.stddev = stddev(rep.midpoints);
  const WalrasPoint w = walras(c.model.pair);
  if (c.model.rho >= w.volume && c.model.pair.assumptions().a6) {
    rep.support = freeze_support(c.model.pair, c.model.rho);
  }
  if (c.freeze.gambler_y) rep.gambler = gambler_scenario(c, *c.freeze.gambler_y, master);

  // Midpoint histogram over the support when it has length, else over I.
  const PriceInterval hist_iv = rep.support && !rep.support->degenerate
                                    ? PriceInterval(rep.support->lo, rep.support->hi)
                                    : c.model.pair.interval();
  const std::size_t bins = c.freeze.bins;
  std::vector<std::size_t> counts(bins, 0);
  std::size_t outside = 0;
  for (double m : rep.midpoints) {
    if (m < hist_iv.lo || m > hist_iv.hi) {
      ++outside;
      continue;
    }
    const auto k = static_cast<std::size_t>((m - hist_iv.lo) / hist_iv.length() *
                                            static_cast<double>(bins));
    ++counts[std::min(k, bins - 1)];
  }

  nlohmann::json j;
  j["schema_version"] = io::kSchemaVersion;
  j["rho"] = c.model.rho;
  j["replicas"] = rep.replicas.size();
  j["frozen"] = rep.frozen;
  j["frozen_fraction"] = rep.frozen_fraction();
  j["midpoint_mean"] = rep.mean;
  j["midpoint_stddev"] = rep.stddev;
  if (!rep.midpoints.empty()) {
    const auto [mn, mx] = std::minmax_element(rep.midpoints.begin(), rep.midpoints.end());
    j["midpoint_range"] = {*mn, *mx};
  } else {
    j["midpoint_range"] = nullptr;
  }
  j["support"] = rep.support ? io::to_json(*rep.support) : nlohmann::json(nullptr);
  j["histogram"] = {{"interval", io::to_json(hist_iv)}, {"counts", counts}, {"outside", outside}};
  if (rep.gambler) {
    j["gambler"] = {{"y", rep.gambler->y},
                    {"bound", rep.gambler->bound},
                    {"replicas", rep.gambler->replicas},
                    {"never_dropped", rep.gambler->never_dropped},
                    {"fraction", rep.gambler->fraction()}};
  } else {
    j["gambler"] = nullptr;
  }

  std::string csv = "replica,seed,frozen,midpoint,freeze_time,final_bid,final_ask\n";
  for (std::size_t r = 0; r < rep.replicas.size(); ++r) {
    const auto& x = rep.replicas[r];
    csv += std::to_string(r) + "," + std::to_string(x.seed) + "," + (x.freeze ? "1" : "0") + "," +
           (x.freeze ? format_double(x.freeze->midpoint) : "") + "," +
           (x.freeze ? format_double(x.freeze->time) : "") + "," + format_double(x.final_bid) +
           "," + format_double(x.final_ask) + "\n";
  }

  FreezeResult res;
  res.report = std::move(rep);
  res.artifacts.add("freeze.json", io::dump(j));
  res.artifacts.add("freeze.csv", std::move(csv));
  return res;
}

// sweep

struct SweepRow {
  double rho = 0.0;
  WindowReport window;
  std::optional<bool> simulated_frozen;
  std::optional<WindowEstimate> simulated_window;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  io::Artifacts artifacts;
};

inline SweepResult cmd_sweep(const ExperimentConfig& c) {
  using namespace experiments_detail;
  if (!c.sweep) throw config_error("sweep needs a sweep block");
  const auto& pair = c.model.pair;
  SweepResult res;
  const bool simulate = c.sweep->simulate;
  const std::uint64_t master = simulate ? require_seed(c) : 0;

  res.rows = parallel_map(c.sweep->rho.size(), c.run.threads, [&](std::size_t i) {
    SweepRow row;
    row.rho = c.sweep->rho[i];
    row.window = v_l(pair, row.rho);
    if (simulate) {
      ExperimentConfig sc = c;
      sc.model.rho = row.rho;
      SimConfig s = make_sim_config(sc, replica_seed(master, i));
      s.snapshot_at.clear();
      const Trajectory tr = run(s);
      const io::FreezeParams fp = freeze_params(sc, tr);
      row.simulated_frozen = detect_freeze(tr, fp.eps, fp.window).has_value();
      try {
        row.simulated_window = estimate_window(tr);
      } catch (const insufficient_data_error&) {
      }
    }
    return row;
  });

  if (!res.rows.empty()) {
    std::string csv = "rho,v_l,x_minus,x_plus,window_length,boundary,frozen";
    if (simulate) csv += ",simulated_frozen,simulated_lo,simulated_hi";
    csv += "\n";
    for (const auto& r : res.rows) {
      const WindowReport& w = r.window;
      csv += format_double(r.rho) + "," + format_double(w.v_l) + "," + format_double(w.x_minus) +
             "," + format_double(w.x_plus) + "," + format_double(w.window_length()) + "," +
             (w.boundary ? "1" : "0") + "," + (w.degenerate ? "1" : "0");
      if (simulate) {
        csv += std::string(",") + (*r.simulated_frozen ? "1" : "0") + ",";
        csv += r.simulated_window ? format_double(r.simulated_window->lo) + "," +
                                        format_double(r.simulated_window->hi)
                                  : ",";
      }
      csv += "\n";
    }
    res.artifacts.add("sweep.csv", std::move(csv));
  }

  if (!c.sweep->volume.empty()) {
    const double rho = c.model.rho;
    std::string csv = "volume,phi,recurrence,j_lo,j_hi\n";
    for (double v : c.sweep->volume) {
      const PriceInterval j = window_for_volume(pair, v);
      csv += format_double(v) + "," + format_double(phi(pair, rho, v).value) + "," +
             to_string(classify_recurrence(pair, rho, v)) + "," + format_double(j.lo) + "," +
             format_double(j.hi) + "\n";
    }
    res.artifacts.add("sweep_volume.csv", std::move(csv));
  }
  return res;
}

}  // namespace lobsim
