#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstring>
#include <set>

#include "lobsim/engine.hpp"
#include "lobsim/theory.hpp"

namespace lobsim {
namespace {

// Uniform model with market-order floors, so all five event kinds occur.
DemandSupplyPair floored_pair() {
  return DemandSupplyPair(
      MonotoneCurve({{0.0, 1.0}, {1.0, 0.2}}, Direction::decreasing),
      MonotoneCurve({{0.0, 0.1}, {1.0, 1.0}}, Direction::increasing));
}

SimConfig uniform_config(double rho, std::uint64_t events, std::uint64_t seed) {
  SimConfig cfg{uniform_pair()};
  cfg.rho = rho;
  cfg.horizon_events = events;
  cfg.seed = seed;
  return cfg;
}

double sup_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

TEST(Rates, KindProbabilities) {
  const RateTable u = RateTable::from(uniform_pair(), 0.0);
  EXPECT_EQ(u.total(), 2.0);
  EXPECT_EQ(u.buy_limit_mass / u.total(), 0.5);
  EXPECT_EQ(u.sell_limit_mass / u.total(), 0.5);
  EXPECT_EQ(u.buy_market, 0.0);
  EXPECT_EQ(u.sell_market, 0.0);
  EXPECT_EQ(u.market_maker, 0.0);
  const RateTable m = RateTable::from(uniform_pair(), 0.5);
  EXPECT_DOUBLE_EQ(m.market_maker / m.total(), 0.2);
  EXPECT_THROW(RateTable::from(uniform_pair(), -1.0), argument_error);
}

TEST(NextEvent, KindFrequenciesMatchRates) {
  const auto pair = floored_pair();
  const RateTable rates = RateTable::from(pair, 0.3);
  Rng rng(99);
  constexpr int kDraws = 1000000;
  std::array<int, 5> counts{};
  for (int i = 0; i < kDraws; ++i) {
    const TimedEvent te = next_event(rates, pair, rng);
    ++counts[static_cast<std::size_t>(te.event.kind)];
    const bool limit = te.event.kind == EventKind::buy_limit || te.event.kind == EventKind::sell_limit;
    ASSERT_EQ(te.event.price.has_value(), limit);
    if (limit) {
      ASSERT_TRUE(pair.interval().contains_open(*te.event.price));
    }
  }
  for (EventKind k : kAllEventKinds) {
    const double p = rates.rate_of(k) / rates.total();
    const double se = std::sqrt(p * (1 - p) / kDraws);
    EXPECT_NEAR(counts[static_cast<std::size_t>(k)] / double(kDraws), p, 3 * se) << to_string(k);
  }
}

TEST(NextEvent, NeverDrawsZeroRateKinds) {
  const auto pair = uniform_pair();
  const RateTable rates = RateTable::from(pair, 0.0);
  Rng rng(5);
  for (int i = 0; i < 100000; ++i) {
    const auto k = next_event(rates, pair, rng).event.kind;
    ASSERT_TRUE(k == EventKind::buy_limit || k == EventKind::sell_limit);
  }
}

TEST(NextEvent, WaitsAreExponential) {
  const auto pair = floored_pair();
  const RateTable rates = RateTable::from(pair, 0.3);
  Rng rng(123);
  constexpr int kDraws = 1000000;
  double sum = 0.0;
  double sum2 = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double w = next_event(rates, pair, rng).wait;
    sum += w;
    sum2 += w * w;
  }
  const double mean = sum / kDraws;
  const double var = sum2 / kDraws - mean * mean;
  const double lambda = rates.total();
  EXPECT_NEAR(mean * lambda, 1.0, 0.01);
  EXPECT_NEAR(var * lambda * lambda, 1.0, 0.01);
}

TEST(Restriction, Policy) {
  const PriceInterval j(0.2, 0.8);
  EXPECT_EQ(restrict_event(Event::buy_limit(0.9), j), Event::buy_market());
  EXPECT_EQ(restrict_event(Event::buy_limit(0.8), j), Event::buy_market());
  EXPECT_FALSE(restrict_event(Event::buy_limit(0.1), j).has_value());
  EXPECT_FALSE(restrict_event(Event::buy_limit(0.2), j).has_value());
  EXPECT_EQ(restrict_event(Event::sell_limit(0.1), j), Event::sell_market());
  EXPECT_FALSE(restrict_event(Event::sell_limit(0.95), j).has_value());
  EXPECT_EQ(restrict_event(Event::sell_limit(0.5), j), Event::sell_limit(0.5));
  EXPECT_EQ(restrict_event(Event::market_maker(), j), Event::market_maker());
  EXPECT_EQ(restrict_event(Event::sell_market(), j), Event::sell_market());
  const PriceInterval whole(0.0, 1.0);
  for (double x : {0.01, 0.5, 0.99}) {
    EXPECT_EQ(restrict_event(Event::buy_limit(x), whole), Event::buy_limit(x));
    EXPECT_EQ(restrict_event(Event::sell_limit(x), whole), Event::sell_limit(x));
  }
}

TEST(Grid, CdfAndSurvivalKeepAtoms) {
  GridDistribution g(PriceInterval(0.0, 1.0), 11);
  g.add(0.5, 1.0);   // on a grid point
  g.add(0.25, 3.0);  // between points
  const auto c = g.cdf();
  const auto s = g.survival();
  EXPECT_EQ(g.total_weight(), 4.0);
  EXPECT_EQ(c[2], 0.0);
  EXPECT_EQ(c[3], 0.75);
  EXPECT_EQ(c[5], 1.0);
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[3], 0.25);
  EXPECT_EQ(s[5], 0.25);
  EXPECT_EQ(s[6], 0.0);
  EXPECT_EQ(g.point(10), 1.0);
  EXPECT_THROW(GridDistribution(PriceInterval(0.0, 1.0), 1), argument_error);
}

TEST(Run, ZeroHorizonLeavesBookUnchanged) {
  SimConfig cfg = uniform_config(0.0, 0, 1);
  OrderBook start(PriceInterval(0.0, 1.0));
  start.place(Side::buy, 0.3);
  cfg.initial_book = start;
  const Trajectory tr = run(cfg);
  EXPECT_TRUE(tr.records.empty());
  EXPECT_EQ(tr.events, 0u);
  EXPECT_EQ(tr.final_book, start);
  EXPECT_THROW(estimate_window(tr), insufficient_data_error);
}

TEST(Run, RejectsInvalidConfigs) {
  SimConfig cfg = uniform_config(0.0, 10, 1);
  cfg.burn_in = 1.0;
  EXPECT_THROW(run(cfg), argument_error);
  cfg.burn_in = 0.5;
  cfg.restriction = PriceInterval(0.5, 1.5);
  EXPECT_THROW(run(cfg), argument_error);
  cfg.restriction = PriceInterval(0.2, 0.8);
  cfg.initial_book = OrderBook(PriceInterval(0.0, 1.0));
  EXPECT_THROW(run(cfg), argument_error);
}

bool same_records(const Trajectory& a, const Trajectory& b) {
  if (a.records.size() != b.records.size()) return false;
  return std::memcmp(a.records.data(), b.records.data(),
                     a.records.size() * sizeof(EventRecord)) == 0;
}

TEST(Run, Deterministic) {
  SimConfig cfg{floored_pair()};
  cfg.rho = 0.4;
  cfg.horizon_events = 20000;
  cfg.seed = 77;
  cfg.snapshot_at = {100, 5000};
  const Trajectory a = run(cfg);
  const Trajectory b = run(cfg);
  EXPECT_TRUE(same_records(a, b));
  EXPECT_EQ(a.final_book, b.final_book);
  EXPECT_EQ(snapshot_csv(a.snapshots[1].second), snapshot_csv(b.snapshots[1].second));
  EXPECT_EQ(a.bid_time.cdf(), b.bid_time.cdf());
  cfg.seed = 78;
  EXPECT_FALSE(same_records(a, run(cfg)));
}

TEST(Run, TimesIncreaseAndSnapshotsAreTaken) {
  SimConfig cfg = uniform_config(0.3, 5000, 4);
  cfg.snapshot_at = {0, 10, 10, 4999, 5000};
  const Trajectory tr = run(cfg);
  for (std::size_t i = 1; i < tr.records.size(); ++i) {
    ASSERT_GT(tr.records[i].time, tr.records[i - 1].time);
  }
  ASSERT_EQ(tr.snapshots.size(), 4u);
  EXPECT_TRUE(tr.snapshots[0].second.empty());
  EXPECT_EQ(tr.snapshots[3].second, tr.final_book);
  EXPECT_EQ(tr.burn_in_index, 2500u);
  for (const auto& [n, book] : tr.snapshots) EXPECT_TRUE(book.valid()) << n;
}

TEST(Run, TimeHorizon) {
  SimConfig cfg = uniform_config(0.0, 0, 8);
  cfg.horizon_time = 500.0;
  cfg.burn_in = 0.2;
  const Trajectory tr = run(cfg);
  EXPECT_EQ(tr.end_time, 500.0);
  EXPECT_NEAR(tr.observed_time, 400.0, 1e-9);
  EXPECT_NEAR(tr.bid_time.total_weight(), 400.0, 1e-9);
  EXPECT_NEAR(static_cast<double>(tr.events), 1000.0, 150.0);
  EXPECT_LE(tr.records.back().time, 500.0);
}

TEST(Run, LimitOnlyAccountingIdentity) {
  const Trajectory tr = run(uniform_config(0.0, 100000, 31));
  std::int64_t resting_buys = 0;
  std::int64_t resting_sells = 0;
  for (const auto& r : tr.records) {
    if (r.kind == EventKind::buy_limit) (r.traded() ? resting_sells : resting_buys) += r.traded() ? -1 : 1;
    if (r.kind == EventKind::sell_limit) (r.traded() ? resting_buys : resting_sells) += r.traded() ? -1 : 1;
  }
  EXPECT_EQ(resting_buys, static_cast<std::int64_t>(tr.final_book.buy_count()));
  EXPECT_EQ(resting_sells, static_cast<std::int64_t>(tr.final_book.sell_count()));
}

// Books agree on the open interval J.
bool same_inside(const OrderBook& restricted, const OrderBook& full, const PriceInterval& j) {
  auto side = [&](const OrderBook::Side_map& m) {
    OrderBook::Side_map out;
    for (const auto& [p, c] : m) {
      if (j.contains_open(p)) out[p] = c;
    }
    return out;
  };
  return restricted.buys() == side(full.buys()) && restricted.sells() == side(full.sells());
}

TEST(Run, RestrictedRunCouplesWithFullRunInsideJ) {
  const PriceInterval j(0.25, 0.75);
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    SimConfig full{floored_pair()};
    full.rho = 0.2;
    full.horizon_events = 3000;
    full.seed = seed;
    for (std::uint64_t n = 0; n <= full.horizon_events; ++n) full.snapshot_at.push_back(n);
    OrderBook start_full(PriceInterval(0.0, 1.0));
    OrderBook start_j(j);
    for (double p : {0.3, 0.4, 0.45}) {
      start_full.place(Side::buy, p);
      start_j.place(Side::buy, p);
    }
    for (double p : {0.55, 0.6, 0.7}) {
      start_full.place(Side::sell, p);
      start_j.place(Side::sell, p);
    }
    SimConfig restricted = full;
    restricted.restriction = j;
    full.initial_book = start_full;
    restricted.initial_book = start_j;
    const Trajectory a = run(full);
    const Trajectory b = run(restricted);
    std::size_t coupled = 0;
    for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
      const OrderBook& fb = a.snapshots[k].second;
      if (fb.buy_count() == 0 || fb.sell_count() == 0 || fb.bid() <= j.lo || fb.ask() >= j.hi) break;
      ASSERT_TRUE(same_inside(b.snapshots[k].second, fb, j)) << "seed " << seed << " step " << k;
      ++coupled;
    }
    EXPECT_GE(coupled, 5u) << seed;
  }
}

TEST(DiscreteMapTest, CeilHalf) {
  const DiscreteMap psi = DiscreteMap::ceil_half(3);
  EXPECT_EQ(psi(0.4), 1.0);
  EXPECT_EQ(psi(2.0), 1.0);
  EXPECT_EQ(psi(2.1), 2.0);
  EXPECT_EQ(psi(6.0), 3.0);
  EXPECT_THROW(psi(6.5), domain_error);
  EXPECT_THROW(DiscreteMap({1.0, 2.0}, {2.0, 1.0}, PriceInterval(0, 3)), invalid_map_error);
}

TEST(DiscreteMapTest, ImageBook) {
  const DiscreteMap psi = DiscreteMap::ceil_half(3);
  OrderBook b(PriceInterval(0.0, 6.0));
  b.place(Side::buy, 0.4);
  b.place(Side::buy, 1.8);
  const OrderBook img = image_book(b, psi);
  EXPECT_EQ(img.depth(Side::buy, 1.0), 2u);
  EXPECT_EQ(img.buy_count(), 2u);
  EXPECT_TRUE(image_book(OrderBook(PriceInterval(0.0, 6.0)), psi).empty());
  // A buy and a sell in the same cell collide in the image.
  OrderBook bad(PriceInterval(0.0, 6.0));
  bad.place(Side::buy, 0.5);
  bad.place(Side::sell, 1.5);
  EXPECT_THROW(image_book(bad, psi), invalid_map_error);
}

TEST(DiscreteMapTest, EvenOddImageIsNonCrossing) {
  SimConfig cfg{evenodd_pair(3)};
  cfg.horizon_events = 10000;
  cfg.seed = 2;
  for (std::uint64_t n = 0; n <= 10000; n += 50) cfg.snapshot_at.push_back(n);
  const Trajectory tr = run(cfg);
  const DiscreteMap psi = DiscreteMap::ceil_half(3);
  for (const auto& [n, book] : tr.snapshots) {
    const OrderBook img = image_book(book, psi);
    ASSERT_TRUE(img.valid()) << n;
    for (const auto* side : {&img.buys(), &img.sells()}) {
      for (const auto& [p, c] : *side) {
        ASSERT_TRUE(p == 1.0 || p == 2.0 || p == 3.0) << p;
      }
    }
  }
}

Trajectory synthetic(const std::vector<std::pair<double, double>>& quotes) {
  Trajectory tr;
  tr.interval = PriceInterval(0.0, 1.0);
  double t = 0.0;
  for (const auto& [b, a] : quotes) {
    t += 1.0;
    tr.records.push_back({t, std::numeric_limits<double>::quiet_NaN(), b, a, EventKind::buy_limit});
  }
  return tr;
}

TEST(Window, ConstantQuotes) {
  const Trajectory tr = synthetic(std::vector<std::pair<double, double>>(10, {0.3, 0.7}));
  const WindowEstimate w = estimate_window(tr);
  EXPECT_EQ(w.lo, 0.3);
  EXPECT_EQ(w.hi, 0.7);
  // Fallback quotes at the interval ends do not count.
  const Trajectory empty = synthetic({{0.0, 1.0}, {0.0, 1.0}});
  EXPECT_THROW(estimate_window(empty), insufficient_data_error);
}

TEST(Freeze, DetectsAtFirstWindowCompletion) {
  const Trajectory tr = synthetic(std::vector<std::pair<double, double>>(50, {0.4975, 0.5025}));
  const auto f = detect_freeze(tr, 0.01, 10);
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->index, 9u);
  EXPECT_EQ(f->time, 10.0);
  EXPECT_DOUBLE_EQ(f->midpoint, 0.5);
}

TEST(Freeze, WaitsForTheLastDisturbance) {
  std::vector<std::pair<double, double>> q(60, {0.5, 0.505});
  q[20] = {0.2, 0.505};
  const auto f = detect_freeze(synthetic(q), 0.01, 10);
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->index, 30u);
  q.back() = {0.1, 0.9};
  EXPECT_FALSE(detect_freeze(synthetic(q), 0.01, 10).has_value());
  EXPECT_FALSE(detect_freeze(synthetic(q), 0.01, 100).has_value());
  EXPECT_THROW(detect_freeze(synthetic(q), 0.0, 10), argument_error);
}

TEST(Seeds, ReplicaSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t m : {0u, 1u, 42u}) {
    for (std::uint64_t r = 0; r < 1000; ++r) seen.insert(replica_seed(m, r));
  }
  EXPECT_EQ(seen.size(), 3000u);
  EXPECT_EQ(replica_seed(42, 7), replica_seed(42, 7));
}

// Long uniform runs shared by several checks.
class UniformLongRun : public ::testing::Test {
 protected:
  static const Trajectory& plain() {
    static const Trajectory tr = run(uniform_config(0.0, 1000000, 2718));
    return tr;
  }
};

TEST_F(UniformLongRun, TimeAndEpochEstimatorsAgree) {
  const Trajectory& tr = plain();
  EXPECT_LT(sup_distance(tr.bid_time.cdf(), tr.bid_epoch.cdf()), 0.01);
  EXPECT_LT(sup_distance(tr.ask_time.survival(), tr.ask_epoch.survival()), 0.01);
}

TEST_F(UniformLongRun, WindowNearTheory) {
  const WindowEstimate w = estimate_window(plain());
  EXPECT_NEAR(w.lo, 0.2178, 0.03);
  EXPECT_NEAR(w.hi, 0.7822, 0.03);
  EXPECT_FALSE(detect_freeze(plain(), 0.01, 100000).has_value());
}

TEST_F(UniformLongRun, MarketMakersNarrowTheWindow) {
  const WindowEstimate w0 = estimate_window(plain());
  const WindowEstimate w2 = estimate_window(run(uniform_config(0.2, 1000000, 2718)));
  EXPECT_LT(w2.hi - w2.lo, w0.hi - w0.lo);
}

TEST(FreezeRun, SupercriticalRunFreezesInsideSupport) {
  SimConfig cfg = uniform_config(0.6, 1000000, 11);
  const Trajectory tr = run(cfg);
  const auto f = detect_freeze(tr, 0.01, 100000);
  ASSERT_TRUE(f.has_value());
  EXPECT_GE(f->midpoint, 0.38);
  EXPECT_LE(f->midpoint, 0.62);
}

}  // namespace
}  // namespace lobsim
