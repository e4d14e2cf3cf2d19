#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lobsim/book.hpp"
#include "lobsim/engine.hpp"
#include "lobsim/theory.hpp"

namespace lobsim::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

// trade_price is blank for events that did not trade.
inline std::string trajectory_csv(const Trajectory& tr) {
  std::string out = "event_index,time,kind,trade_price,bid,ask\n";
  out.reserve(out.size() + tr.records.size() * 64);
  for (std::size_t i = 0; i < tr.records.size(); ++i) {
    const EventRecord& r = tr.records[i];
    out += std::to_string(i);
    out += ',';
    out += format_double(r.time);
    out += ',';
    out += to_string(r.kind);
    out += ',';
    if (r.traded()) out += format_double(r.trade_price);
    out += ',';
    out += format_double(r.bid);
    out += ',';
    out += format_double(r.ask);
    out += '\n';
  }
  return out;
}

/// Resting orders counted in `bins` equal price bins over the book interval.
inline std::string histogram_csv(const OrderBook& book, std::size_t bins = 100) {
  if (bins == 0) throw argument_error("histogram needs at least one bin");
  const PriceInterval iv = book.interval();
  std::vector<std::uint64_t> buys(bins, 0);
  std::vector<std::uint64_t> sells(bins, 0);
  auto bin_of = [&](double p) {
    const auto k = static_cast<std::size_t>((p - iv.lo) / iv.length() * static_cast<double>(bins));
    return std::min(k, bins - 1);
  };
  for (const auto& [p, c] : book.buys()) buys[bin_of(p)] += c;
  for (const auto& [p, c] : book.sells()) sells[bin_of(p)] += c;
  std::string out = "bin_lo,bin_hi,buy_count,sell_count\n";
  for (std::size_t k = 0; k < bins; ++k) {
    const double lo = iv.lo + iv.length() * static_cast<double>(k) / static_cast<double>(bins);
    const double hi = k + 1 == bins ? iv.hi
                                    : iv.lo + iv.length() * static_cast<double>(k + 1) /
                                                  static_cast<double>(bins);
    out += format_double(lo) + "," + format_double(hi) + "," + std::to_string(buys[k]) + "," +
           std::to_string(sells[k]) + "\n";
  }
  return out;
}

inline json to_json(const PriceInterval& iv) { return json::array({iv.lo, iv.hi}); }

inline json to_json(const FreezeRecord& f) {
  return {{"midpoint", f.midpoint}, {"time", f.time}, {"index", f.index}};
}

inline json to_json(const FreezeSupport& s) {
  return {{"lo", s.lo}, {"hi", s.hi}, {"degenerate", s.degenerate}};
}

inline json cdf_grid_json(const GridDistribution& bid, const GridDistribution& ask) {
  json price = json::array();
  for (std::size_t j = 0; j < bid.size(); ++j) price.push_back(bid.point(j));
  return {{"price", std::move(price)}, {"bid_cdf", bid.cdf()}, {"ask_survival", ask.survival()}};
}

struct FreezeParams {
  double eps;
  std::size_t window;
};

inline json summary_json(const Trajectory& tr, std::optional<FreezeParams> freeze) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["interval"] = to_json(tr.interval);
  j["events"] = tr.events;
  j["end_time"] = tr.end_time;
  j["burn_in_index"] = tr.burn_in_index;
  j["trade_count"] = tr.trade_count;
  j["post_burn_in_trades"] = tr.post_burn_in_trades;
  j["empty_returns"] = tr.empty_returns;
  j["resting_buys"] = tr.final_book.buy_count();
  j["resting_sells"] = tr.final_book.sell_count();
  j["empty_buy_fraction"] = tr.empty_buy_fraction();
  j["empty_sell_fraction"] = tr.empty_sell_fraction();
  try {
    const WindowEstimate w = estimate_window(tr);
    j["window_estimate"] = {{"lo", w.lo}, {"hi", w.hi}};
  } catch (const insufficient_data_error&) {
    j["window_estimate"] = nullptr;
  }
  j["freeze"] = nullptr;
  if (freeze) {
    j["freeze_params"] = {{"eps", freeze->eps}, {"window", freeze->window}};
    if (auto f = detect_freeze(tr, freeze->eps, freeze->window)) j["freeze"] = to_json(*f);
  }
  j["cdf"] = cdf_grid_json(tr.bid_time, tr.ask_time);
  return j;
}

inline json to_json(const WindowReport& r) {
  json j;
  j["rho"] = r.rho;
  j["v_w"] = r.v_w;
  j["x_w"] = r.x_w;
  j["v_max"] = r.v_max;
  j["v_max_effective"] = r.v_max_effective;
  j["v_l"] = r.v_l;
  j["window"] = {r.x_minus, r.x_plus};
  j["window_length"] = r.window_length();
  j["threshold"] = number_or_null(r.threshold);
  j["boundary"] = r.boundary;
  j["degenerate"] = r.degenerate;
  j["freeze_support"] = r.freeze ? to_json(*r.freeze) : json(nullptr);
  return j;
}

inline json to_json(const LuckockSolution& s) {
  return {{"window", to_json(s.window)},
          {"rho", s.rho},
          {"grid_points", s.x.size()},
          {"f_minus_at_left", s.edge_minus},
          {"f_plus_at_right", s.edge_plus},
          {"boundary_residual", s.boundary_residual},
          {"negative_edge", s.negative_edge},
          {"clamped", s.clamped}};
}

inline json to_json(const std::vector<PhiSample>& table) {
  json rows = json::array();
  for (const auto& s : table) rows.push_back({s.volume, s.value, s.error_estimate});
  return {{"columns", {"volume", "phi", "error_estimate"}}, {"rows", std::move(rows)}};
}

inline std::string luckock_csv(const LuckockSolution& s) {
  std::string out = "price,f_minus,f_plus\n";
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    out += format_double(s.x[i]) + "," + format_double(s.f_minus[i]) + "," +
           format_double(s.f_plus[i]) + "\n";
  }
  return out;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Named file contents produced by a command, written in one pass afterwards.
struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;

  void add(std::string name, std::string content) {
    files.emplace_back(std::move(name), std::move(content));
  }
  const std::string* find(const std::string& name) const {
    for (const auto& [n, c] : files) {
      if (n == name) return &c;
    }
    return nullptr;
  }
};

inline void write_artifacts(const std::filesystem::path& dir, const Artifacts& art) {
  for (const auto& [name, content] : art.files) {
    const std::filesystem::path p = dir / name;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw error("cannot open " + p.string() + " for writing");
    f << content;
    if (!f) throw error("failed writing " + p.string());
  }
}

}  // namespace lobsim::io
