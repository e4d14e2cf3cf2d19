#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "lobsim/book.hpp"
#include "lobsim/curves.hpp"
#include "lobsim/error.hpp"
#include "lobsim/rng.hpp"

namespace lobsim {

/// Poisson rates of the five event types. State-independent.
struct RateTable {
  double buy_market = 0.0;       // λ−(I+)
  double sell_market = 0.0;      // λ+(I−)
  double buy_limit_mass = 0.0;   // λ−(I−) − λ−(I+)
  double sell_limit_mass = 0.0;  // λ+(I+) − λ+(I−)
  double market_maker = 0.0;     // ρ

  static RateTable from(const DemandSupplyPair& pair, double rho) {
    if (!(rho >= 0.0) || !std::isfinite(rho)) {
      throw argument_error("market maker rate must be finite and >= 0");
    }
    RateTable t;
    t.buy_market = pair.demand().min_rate();
    t.sell_market = pair.supply().min_rate();
    t.buy_limit_mass = pair.demand().total_mass();
    t.sell_limit_mass = pair.supply().total_mass();
    t.market_maker = rho;
    return t;
  }

  double total() const noexcept {
    return buy_market + sell_market + buy_limit_mass + sell_limit_mass + market_maker;
  }

  double rate_of(EventKind k) const noexcept {
    switch (k) {
      case EventKind::buy_market: return buy_market;
      case EventKind::sell_market: return sell_market;
      case EventKind::buy_limit: return buy_limit_mass;
      case EventKind::sell_limit: return sell_limit_mass;
      case EventKind::market_maker: return market_maker;
    }
    return 0.0;
  }
};

inline constexpr std::array<EventKind, 5> kAllEventKinds = {
    EventKind::buy_market, EventKind::sell_market, EventKind::buy_limit, EventKind::sell_limit,
    EventKind::market_maker};

struct TimedEvent {
  double wait;
  Event event;
};

namespace detail {

inline double clamp_open(double x, const PriceInterval& iv) noexcept {
  if (x <= iv.lo) return std::nextafter(iv.lo, iv.hi);
  if (x >= iv.hi) return std::nextafter(iv.hi, iv.lo);
  return x;
}

}  // namespace detail

/// Draws the waiting time and the next event of the merged Poisson stream.
/// Consumes exactly three variates per call.
inline TimedEvent next_event(const RateTable& rates, const DemandSupplyPair& pair, Rng& rng) {
  const double total = rates.total();
  const double wait = rng.exponential(total);
  const double pick = rng.uniform_open() * total;
  const double u = rng.uniform_open();

  EventKind kind = EventKind::market_maker;
  bool chosen = false;
  double acc = 0.0;
  for (EventKind k : kAllEventKinds) {
    const double r = rates.rate_of(k);
    acc += r;
    if (r > 0.0 && pick < acc) {
      kind = k;
      chosen = true;
      break;
    }
  }
  if (!chosen) {
    // Rounding pushed pick to the total: take the last category with mass.
    for (EventKind k : kAllEventKinds) {
      if (rates.rate_of(k) > 0.0) kind = k;
    }
  }

  const PriceInterval iv = pair.interval();
  switch (kind) {
    case EventKind::buy_limit:
      return {wait, Event::buy_limit(detail::clamp_open(pair.demand().quantile(u), iv))};
    case EventKind::sell_limit:
      return {wait, Event::sell_limit(detail::clamp_open(pair.supply().quantile(u), iv))};
    default:
      return {wait, Event{kind, std::nullopt}};
  }
}

/// Restricted-model rule: limit orders arriving outside J either become market
/// orders (when they would cross J entirely) or have no effect.
inline std::optional<Event> restrict_event(const Event& ev, const PriceInterval& j) {
  if (ev.kind == EventKind::buy_limit) {
    const double x = *ev.price;
    if (x >= j.hi) return Event::buy_market();
    if (x <= j.lo) return std::nullopt;
  } else if (ev.kind == EventKind::sell_limit) {
    const double x = *ev.price;
    if (x <= j.lo) return Event::sell_market();
    if (x >= j.hi) return std::nullopt;
  }
  return ev;
}

/// Time-weighted (or count-weighted) distribution of a price on a fixed grid
/// of `points` equally spaced prices spanning a closed interval. Keeps both
/// P[X <= g] and P[X >= g] so atoms at grid points are not lost.
class GridDistribution {
 public:
  GridDistribution() = default;
  GridDistribution(PriceInterval iv, std::size_t points)
      : lo_(iv.lo), hi_(iv.hi), le_(points, 0.0), ge_(points + 1, 0.0) {
    if (points < 2) throw argument_error("grid distribution needs at least two points");
  }

  std::size_t size() const noexcept { return le_.size(); }
  double point(std::size_t j) const noexcept {
    if (j + 1 == le_.size()) return hi_;
    return lo_ + (hi_ - lo_) * static_cast<double>(j) / static_cast<double>(le_.size() - 1);
  }
  double total_weight() const noexcept { return total_; }

  void add(double value, double weight) noexcept {
    total_ += weight;
    const std::size_t n = le_.size();
    // first grid index with point >= value
    std::size_t first_ge = index_near(value);
    while (first_ge > 0 && point(first_ge - 1) >= value) --first_ge;
    while (first_ge < n && point(first_ge) < value) ++first_ge;
    if (first_ge < n) le_[first_ge] += weight;
    // last grid index with point <= value, plus one
    std::size_t past_le = first_ge;
    while (past_le < n && point(past_le) <= value) ++past_le;
    ge_[past_le] -= weight;
    ge_[0] += weight;
  }

  /// P[X <= point(j)] for every grid point.
  std::vector<double> cdf() const {
    std::vector<double> out(le_.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < le_.size(); ++j) {
      acc += le_[j];
      out[j] = total_ > 0.0 ? std::min(1.0, acc / total_) : 0.0;
    }
    return out;
  }

  /// P[X >= point(j)] for every grid point.
  std::vector<double> survival() const {
    std::vector<double> out(le_.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < le_.size(); ++j) {
      acc += ge_[j];
      out[j] = total_ > 0.0 ? std::clamp(acc / total_, 0.0, 1.0) : 0.0;
    }
    return out;
  }

 private:
  std::size_t index_near(double value) const noexcept {
    const double f = (value - lo_) / (hi_ - lo_) * static_cast<double>(le_.size() - 1);
    if (!(f > 0.0)) return 0;
    return std::min(le_.size() - 1, static_cast<std::size_t>(std::ceil(f)));
  }

  double lo_ = 0.0;
  double hi_ = 1.0;
  double total_ = 0.0;
  std::vector<double> le_;  // mass whose first grid point at or above the value is j
  std::vector<double> ge_;  // difference array for P[X >= g_j]
};

struct SimConfig {
  DemandSupplyPair pair;
  double rho = 0.0;
  std::uint64_t horizon_events = 0;
  std::optional<double> horizon_time{};  // overrides horizon_events when set
  std::uint64_t seed = 0;
  std::optional<PriceInterval> restriction{};
  double burn_in = 0.5;
  std::vector<std::uint64_t> snapshot_at{};  // book after this many events
  std::optional<OrderBook> initial_book{};
  bool record_events = true;
  std::size_t cdf_points = 1024;
};

struct EventRecord {
  double time;
  double trade_price;  // NaN when no trade happened
  double bid;
  double ask;
  EventKind kind;

  bool traded() const noexcept { return !std::isnan(trade_price); }
};

struct Trajectory {
  PriceInterval interval;  // interval of the book (J for restricted runs)
  std::vector<EventRecord> records;
  std::uint64_t events = 0;
  std::size_t burn_in_index = 0;  // first post-burn-in record
  double end_time = 0.0;

  std::uint64_t trade_count = 0;
  std::uint64_t post_burn_in_trades = 0;
  std::uint64_t empty_returns = 0;  // transitions into a completely empty book
  double observed_time = 0.0;       // post-burn-in time covered by the time-weighted stats
  double time_without_buys = 0.0;
  double time_without_sells = 0.0;
  double min_bid = 0.0;  // over the whole run, including the initial state
  double max_ask = 0.0;

  GridDistribution bid_time;  // time-weighted, post burn-in
  GridDistribution ask_time;
  GridDistribution bid_epoch;  // sampled at post-burn-in event epochs
  GridDistribution ask_epoch;

  OrderBook final_book{PriceInterval(0.0, 1.0)};
  std::vector<std::pair<std::uint64_t, OrderBook>> snapshots;

  double empty_buy_fraction() const noexcept {
    return observed_time > 0.0 ? time_without_buys / observed_time : 0.0;
  }
  double empty_sell_fraction() const noexcept {
    return observed_time > 0.0 ? time_without_sells / observed_time : 0.0;
  }
};

inline std::uint64_t replica_seed(std::uint64_t master, std::uint64_t replica) noexcept {
  std::uint64_t a = master;
  std::uint64_t mixed = splitmix64(a) ^ (replica * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
  return splitmix64(mixed);
}

inline void validate(const SimConfig& cfg) {
  if (!(cfg.rho >= 0.0) || !std::isfinite(cfg.rho)) {
    throw argument_error("rho must be finite and >= 0");
  }
  if (!(cfg.burn_in >= 0.0 && cfg.burn_in < 1.0)) {
    throw argument_error("burn_in must lie in [0, 1)");
  }
  if (cfg.horizon_time && !(*cfg.horizon_time >= 0.0 && std::isfinite(*cfg.horizon_time))) {
    throw argument_error("time horizon must be finite and >= 0");
  }
  if (cfg.restriction && !cfg.pair.interval().contains(*cfg.restriction)) {
    throw argument_error("restriction J must lie inside the model interval");
  }
  const PriceInterval book_iv = cfg.restriction.value_or(cfg.pair.interval());
  if (cfg.initial_book) {
    if (!(cfg.initial_book->interval() == book_iv)) {
      throw argument_error("initial book interval does not match the simulated interval");
    }
    if (!cfg.initial_book->valid()) throw argument_error("initial book is not a valid state");
  }
  if (!(RateTable::from(cfg.pair, cfg.rho).total() > 0.0)) {
    throw argument_error("total event rate is zero");
  }
}

/// Runs the Markov chain from the configured start state. Bit-reproducible
/// for a fixed config (including seed).
inline Trajectory run(const SimConfig& cfg) {
  validate(cfg);
  const RateTable rates = RateTable::from(cfg.pair, cfg.rho);
  const PriceInterval book_iv = cfg.restriction.value_or(cfg.pair.interval());
  Rng rng(cfg.seed);

  Trajectory tr;
  tr.interval = book_iv;
  tr.bid_time = GridDistribution(book_iv, cfg.cdf_points);
  tr.ask_time = GridDistribution(book_iv, cfg.cdf_points);
  tr.bid_epoch = GridDistribution(book_iv, cfg.cdf_points);
  tr.ask_epoch = GridDistribution(book_iv, cfg.cdf_points);

  OrderBook book = cfg.initial_book.value_or(OrderBook(book_iv));
  std::vector<std::uint64_t> snaps = cfg.snapshot_at;
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  auto next_snap = snaps.begin();
  auto take_snapshots = [&](std::uint64_t n) {
    while (next_snap != snaps.end() && *next_snap == n) {
      tr.snapshots.emplace_back(n, book);
      ++next_snap;
    }
  };

  const bool by_time = cfg.horizon_time.has_value();
  const double t_end = by_time ? *cfg.horizon_time : 0.0;
  const double burn_time = by_time ? cfg.burn_in * t_end : 0.0;
  const auto burn_events =
      static_cast<std::uint64_t>(std::floor(cfg.burn_in * static_cast<double>(cfg.horizon_events)));
  if (cfg.record_events && !by_time) tr.records.reserve(cfg.horizon_events);

  tr.min_bid = book.bid();
  tr.max_ask = book.ask();
  bool burn_known = false;
  double t = 0.0;
  std::uint64_t n = 0;
  take_snapshots(0);

  // Adds the holding time of the current state to the time-weighted stats.
  auto observe_holding = [&](double dt) {
    const double b = book.bid();
    const double a = book.ask();
    tr.bid_time.add(b, dt);
    tr.ask_time.add(a, dt);
    tr.observed_time += dt;
    if (book.buy_count() == 0) tr.time_without_buys += dt;
    if (book.sell_count() == 0) tr.time_without_sells += dt;
  };

  while (true) {
    if (!by_time && n >= cfg.horizon_events) break;
    const TimedEvent te = next_event(rates, cfg.pair, rng);
    const bool post_burn_state = by_time ? t >= burn_time : (n > burn_events);
    if (by_time && t + te.wait > t_end) {
      if (post_burn_state) observe_holding(t_end - t);
      else if (t_end > burn_time) observe_holding(t_end - burn_time);
      t = t_end;
      break;
    }
    if (post_burn_state) {
      observe_holding(te.wait);
    } else if (by_time && t + te.wait > burn_time) {
      observe_holding(t + te.wait - burn_time);
    }
    double t_next = t + te.wait;
    if (!(t_next > t)) t_next = std::nextafter(t, std::numeric_limits<double>::infinity());
    t = t_next;

    std::optional<Event> ev = te.event;
    if (cfg.restriction) ev = restrict_event(te.event, *cfg.restriction);
    const bool was_empty = book.empty();
    Fill fill;
    if (ev) fill = book.apply(*ev);
    if (fill.trade) ++tr.trade_count;
    if (book.empty() && !was_empty) ++tr.empty_returns;

    const bool post_burn_event = by_time ? t >= burn_time : n >= burn_events;
    if (post_burn_event && !burn_known) {
      tr.burn_in_index = static_cast<std::size_t>(n);
      burn_known = true;
    }
    const double b = book.bid();
    const double a = book.ask();
    tr.min_bid = std::min(tr.min_bid, b);
    tr.max_ask = std::max(tr.max_ask, a);
    if (post_burn_event) {
      if (fill.trade) ++tr.post_burn_in_trades;
      tr.bid_epoch.add(b, 1.0);
      tr.ask_epoch.add(a, 1.0);
    }
    if (cfg.record_events) {
      tr.records.push_back({t, fill.trade ? fill.trade_price : std::numeric_limits<double>::quiet_NaN(),
                            b, a, te.event.kind});
    }
    ++n;
    take_snapshots(n);
  }
  if (!burn_known) tr.burn_in_index = static_cast<std::size_t>(n);
  tr.events = n;
  tr.end_time = t;
  tr.final_book = std::move(book);
  return tr;
}

/// Step map from prices to a finite price set: x in (edge[k-1], edge[k]] maps
/// to value[k]; x at or below edge[0] maps to value[0].
class DiscreteMap {
 public:
  DiscreteMap(std::vector<double> upper_edges, std::vector<double> values, PriceInterval target)
      : edges_(std::move(upper_edges)), values_(std::move(values)), target_(target) {
    if (edges_.empty() || edges_.size() != values_.size()) {
      throw argument_error("discrete map needs one value per cell");
    }
    for (std::size_t i = 1; i < edges_.size(); ++i) {
      if (!(edges_[i] > edges_[i - 1])) throw argument_error("discrete map edges must increase");
      if (values_[i] < values_[i - 1]) throw invalid_map_error("discrete map must be nondecreasing");
    }
  }

  /// ψ(x) = ⌈x/2⌉ on (0, 2n), with image in {1, ..., n} inside (0, n+1).
  static DiscreteMap ceil_half(int n) {
    if (n < 1) throw argument_error("ceil_half: n must be >= 1");
    std::vector<double> edges;
    std::vector<double> values;
    for (int k = 1; k <= n; ++k) {
      edges.push_back(2.0 * k);
      values.push_back(k);
    }
    return DiscreteMap(std::move(edges), std::move(values), PriceInterval(0.0, n + 1.0));
  }

  double operator()(double x) const {
    const auto it = std::lower_bound(edges_.begin(), edges_.end(), x);
    if (it == edges_.end()) throw domain_error("discrete map: price above the last cell");
    return values_[static_cast<std::size_t>(std::distance(edges_.begin(), it))];
  }

  const PriceInterval& target() const noexcept { return target_; }

 private:
  std::vector<double> edges_;
  std::vector<double> values_;
  PriceInterval target_;
};

/// Image X ∘ ψ^{-1} of a book under a monotone map.
inline OrderBook image_book(const OrderBook& book, const DiscreteMap& map) {
  OrderBook out(map.target());
  std::map<double, std::uint64_t> buys;
  std::map<double, std::uint64_t> sells;
  for (const auto& [p, c] : book.buys()) buys[map(p)] += c;
  for (const auto& [p, c] : book.sells()) sells[map(p)] += c;
  if (!buys.empty() && !sells.empty() && buys.rbegin()->first >= sells.begin()->first) {
    throw invalid_map_error("image book is crossed");
  }
  for (const auto& [p, c] : buys) {
    if (!map.target().contains_open(p)) throw invalid_map_error("image price outside target interval");
    out.place(Side::buy, p, c);
  }
  for (const auto& [p, c] : sells) {
    if (!map.target().contains_open(p)) throw invalid_map_error("image price outside target interval");
    out.place(Side::sell, p, c);
  }
  return out;
}

struct WindowEstimate {
  double lo;
  double hi;
};

/// Finite-horizon proxy for the competitive window: extreme bid and ask seen
/// after burn-in, counting only states where that side is non-empty.
inline WindowEstimate estimate_window(const Trajectory& tr) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = tr.burn_in_index; i < tr.records.size(); ++i) {
    const auto& r = tr.records[i];
    if (r.bid > tr.interval.lo) lo = std::min(lo, r.bid);
    if (r.ask < tr.interval.hi) hi = std::max(hi, r.ask);
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw insufficient_data_error("no post-burn-in bid/ask observations");
  }
  return {lo, hi};
}

struct FreezeRecord {
  double midpoint;     // final (bid + ask) / 2
  double time;         // completion time of the first qualifying trailing window
  std::size_t index;   // its record index
};

/// Earliest event index k such that every trailing window of `window` events
/// ending at or after k has spread <= eps and bid and ask ranges <= eps.
/// Empty when the final window itself does not qualify.
inline std::optional<FreezeRecord> detect_freeze(const Trajectory& tr, double eps,
                                                 std::size_t window) {
  if (!(eps > 0.0)) throw argument_error("detect_freeze: eps must be positive");
  if (window == 0) throw argument_error("detect_freeze: window must be positive");
  const auto& rec = tr.records;
  if (rec.size() < window) return std::nullopt;

  std::deque<std::size_t> bid_max, bid_min, ask_max, ask_min;
  auto push = [&](std::deque<std::size_t>& dq, std::size_t i, auto value, auto keep) {
    while (!dq.empty() && !keep(value(dq.back()), value(i))) dq.pop_back();
    dq.push_back(i);
  };
  auto bid = [&](std::size_t i) { return rec[i].bid; };
  auto ask = [&](std::size_t i) { return rec[i].ask; };
  auto greater = [](double a, double b) { return a > b; };
  auto less = [](double a, double b) { return a < b; };

  std::size_t wide = 0;  // spread violations inside the window
  std::optional<std::size_t> last_bad;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (rec[i].ask - rec[i].bid > eps) ++wide;
    push(bid_max, i, bid, greater);
    push(bid_min, i, bid, less);
    push(ask_max, i, ask, greater);
    push(ask_min, i, ask, less);
    if (i >= window) {
      const std::size_t out = i - window;
      if (rec[out].ask - rec[out].bid > eps) --wide;
      for (auto* dq : {&bid_max, &bid_min, &ask_max, &ask_min}) {
        if (dq->front() == out) dq->pop_front();
      }
    }
    if (i + 1 < window) continue;
    const bool ok = wide == 0 && bid(bid_max.front()) - bid(bid_min.front()) <= eps &&
                    ask(ask_max.front()) - ask(ask_min.front()) <= eps;
    if (!ok) last_bad = i;
  }
  if (last_bad && *last_bad + 1 == rec.size()) return std::nullopt;
  const std::size_t idx = last_bad ? *last_bad + 1 : window - 1;
  const auto& fin = rec.back();
  return FreezeRecord{0.5 * (fin.bid + fin.ask), rec[idx].time, idx};
}

}  // namespace lobsim
