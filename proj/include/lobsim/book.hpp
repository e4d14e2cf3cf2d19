#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "lobsim/curves.hpp"
#include "lobsim/error.hpp"

namespace lobsim {

enum class Side : std::uint8_t { buy, sell };

enum class EventKind : std::uint8_t { buy_market, sell_market, buy_limit, sell_limit, market_maker };

inline constexpr std::string_view to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::buy_market: return "buy_market";
    case EventKind::sell_market: return "sell_market";
    case EventKind::buy_limit: return "buy_limit";
    case EventKind::sell_limit: return "sell_limit";
    case EventKind::market_maker: return "market_maker";
  }
  return "?";
}

inline constexpr std::string_view to_string(Side s) noexcept {
  return s == Side::buy ? "buy" : "sell";
}

struct Event {
  EventKind kind = EventKind::buy_market;
  std::optional<double> price;  // set iff kind is a limit order

  static Event buy_market() { return {EventKind::buy_market, std::nullopt}; }
  static Event sell_market() { return {EventKind::sell_market, std::nullopt}; }
  static Event market_maker() { return {EventKind::market_maker, std::nullopt}; }
  static Event buy_limit(double x) { return {EventKind::buy_limit, x}; }
  static Event sell_limit(double x) { return {EventKind::sell_limit, x}; }

  friend bool operator==(const Event&, const Event&) = default;
};

struct BidAsk {
  double bid;
  double ask;
};

struct Mutation {
  enum class Op : std::uint8_t { add, remove };
  Op op;
  Side side;
  double price;
};

/// Audit record of one applied event: up to two book mutations.
struct Fill {
  std::array<Mutation, 2> mutations{};
  std::uint8_t count = 0;
  bool trade = false;
  double trade_price = 0.0;

  void push(Mutation m) noexcept { mutations[count++] = m; }
  std::span<const Mutation> view() const noexcept { return {mutations.data(), count}; }
};

/// Unit-size limit orders on both sides of an open price interval, stored as
/// price -> count maps. No resting buy is ever at or above a resting sell.
class OrderBook {
 public:
  using Side_map = std::map<double, std::uint64_t>;

  explicit OrderBook(PriceInterval interval) : interval_(interval) {}

  const PriceInterval& interval() const noexcept { return interval_; }
  const Side_map& buys() const noexcept { return buys_; }
  const Side_map& sells() const noexcept { return sells_; }
  std::uint64_t buy_count() const noexcept { return n_buys_; }
  std::uint64_t sell_count() const noexcept { return n_sells_; }
  bool empty() const noexcept { return n_buys_ == 0 && n_sells_ == 0; }

  double bid() const noexcept { return buys_.empty() ? interval_.lo : buys_.rbegin()->first; }
  double ask() const noexcept { return sells_.empty() ? interval_.hi : sells_.begin()->first; }
  BidAsk bid_ask() const noexcept { return {bid(), ask()}; }

  std::uint64_t depth(Side side, double price) const {
    const auto& m = side == Side::buy ? buys_ : sells_;
    const auto it = m.find(price);
    return it == m.end() ? 0 : it->second;
  }

  /// Place `count` resting orders directly (initial states, images). Throws
  /// argument_error if the price is outside the open interval or the order
  /// would cross the other side.
  void place(Side side, double price, std::uint64_t count = 1) {
    if (!interval_.contains_open(price)) {
      throw argument_error("order price outside the open price interval");
    }
    if (count == 0) return;
    if (side == Side::buy) {
      if (!sells_.empty() && price >= ask()) throw argument_error("buy order would cross the book");
      buys_[price] += count;
      n_buys_ += count;
    } else {
      if (!buys_.empty() && price <= bid()) throw argument_error("sell order would cross the book");
      sells_[price] += count;
      n_sells_ += count;
    }
  }

  Fill apply(const Event& ev) {
    Fill fill;
    switch (ev.kind) {
      case EventKind::buy_market:
        if (!sells_.empty()) take_ask(fill);
        break;
      case EventKind::sell_market:
        if (!buys_.empty()) take_bid(fill);
        break;
      case EventKind::buy_limit: {
        const double x = limit_price(ev);
        if (!sells_.empty() && x >= sells_.begin()->first) {
          take_ask(fill);
        } else {
          add(Side::buy, x, fill);
        }
        break;
      }
      case EventKind::sell_limit: {
        const double x = limit_price(ev);
        if (!buys_.empty() && x <= buys_.rbegin()->first) {
          take_bid(fill);
        } else {
          add(Side::sell, x, fill);
        }
        break;
      }
      case EventKind::market_maker: {
        // Both placements use the quotes from before either one.
        const bool has_bid = !buys_.empty();
        const bool has_ask = !sells_.empty();
        const double b = bid();
        const double a = ask();
        if (has_bid) add(Side::buy, b, fill);
        if (has_ask) add(Side::sell, a, fill);
        break;
      }
    }
    return fill;
  }

  /// Checks non-crossing, interior prices and cached counts.
  bool valid() const {
    std::uint64_t nb = 0;
    std::uint64_t ns = 0;
    for (const auto& [p, c] : buys_) {
      if (!interval_.contains_open(p) || c == 0) return false;
      nb += c;
    }
    for (const auto& [p, c] : sells_) {
      if (!interval_.contains_open(p) || c == 0) return false;
      ns += c;
    }
    if (nb != n_buys_ || ns != n_sells_) return false;
    if (!buys_.empty() && !sells_.empty() && buys_.rbegin()->first >= sells_.begin()->first) {
      return false;
    }
    return true;
  }

  friend bool operator==(const OrderBook& a, const OrderBook& b) {
    return a.interval_ == b.interval_ && a.buys_ == b.buys_ && a.sells_ == b.sells_;
  }

 private:
  double limit_price(const Event& ev) const {
    if (!ev.price || !interval_.contains_open(*ev.price)) {
      throw argument_error("limit order price missing or outside the open price interval");
    }
    return *ev.price;
  }

  void add(Side side, double price, Fill& fill) {
    if (side == Side::buy) {
      ++buys_[price];
      ++n_buys_;
    } else {
      ++sells_[price];
      ++n_sells_;
    }
    fill.push({Mutation::Op::add, side, price});
  }

  void take_ask(Fill& fill) {
    const auto it = sells_.begin();
    const double p = it->first;
    if (--it->second == 0) sells_.erase(it);
    --n_sells_;
    fill.push({Mutation::Op::remove, Side::sell, p});
    fill.trade = true;
    fill.trade_price = p;
  }

  void take_bid(Fill& fill) {
    const auto it = std::prev(buys_.end());
    const double p = it->first;
    if (--it->second == 0) buys_.erase(it);
    --n_buys_;
    fill.push({Mutation::Op::remove, Side::buy, p});
    fill.trade = true;
    fill.trade_price = p;
  }

  PriceInterval interval_;
  Side_map buys_;
  Side_map sells_;
  std::uint64_t n_buys_ = 0;
  std::uint64_t n_sells_ = 0;
};

// Shortest round-trip decimal form of a double.
inline std::string format_double(double x) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

/// CSV snapshot: side,price,count rows sorted by price.
inline std::string snapshot_csv(const OrderBook& book) {
  std::string out = "side,price,count\n";
  // Buys sit strictly below sells, so buys-then-sells is price order.
  for (const auto& [p, c] : book.buys()) {
    out += "buy," + format_double(p) + "," + std::to_string(c) + "\n";
  }
  for (const auto& [p, c] : book.sells()) {
    out += "sell," + format_double(p) + "," + std::to_string(c) + "\n";
  }
  return out;
}

}  // namespace lobsim
