// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "lobsim/config.hpp"
#include "lobsim/experiments.hpp"

namespace {

using namespace lobsim;
using Clock = std::chrono::steady_clock;

// Tolerances and budgets, pinned.
constexpr double kRootTol = 1e-12;
constexpr double kVlTol = 1e-6;
constexpr double kEndpointTol = 5e-4;
constexpr double kPhiTol = 1e-8;
constexpr int kPhiPoints = 50;
constexpr std::uint64_t kMinEmptyReturns = 20;
constexpr double kSupTol = 0.05;
constexpr double kEmptyTol = 0.02;
constexpr double kWindowTol = 0.03;
constexpr double kShrinkRatio = 0.25;
constexpr double kCriticalFrozenShare = 0.90;
constexpr double kSupercriticalLo = 0.38;
constexpr double kSupercriticalHi = 0.62;
constexpr double kMinSpread = 0.01;
constexpr int kMinOccupiedBins = 3;
constexpr double kGamblerMargin = 0.05;
constexpr double kMinThroughput = 2e5;
constexpr std::size_t kPrefill = 1000000;

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  const char* id;
  double budget_s;
  std::function<Outcome()> check;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// e^{-z} - z + 1 = 0 on [1, 2], by plain bisection.
double uniform_z() {
  double lo = 1.0, hi = 2.0;
  auto g = [](double z) { return std::exp(-z) - z + 1.0; };
  while (hi - lo > kRootTol) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Outcome ac1() {
  const double z = uniform_z();
  const WindowReport r = v_l(uniform_pair(), 0.0);
  const bool ok = std::abs(r.v_l - 1.0 / z) <= kVlTol && std::abs(r.x_minus - 0.218) <= kEndpointTol &&
                  std::abs(r.x_plus - 0.782) <= kEndpointTol;
  return {ok, fmt("V_L=%.12f 1/z=%.12f window=(%.6f, %.6f)", r.v_l, 1.0 / z, r.x_minus, r.x_plus)};
}

Outcome ac2() {
  double worst = 0.0;
  const auto pair = uniform_pair();
  for (int i = 0; i < kPhiPoints; ++i) {
    const double v = 0.5 + (0.78 - 0.5) * i / (kPhiPoints - 1);
    const double closed = 2.0 * (std::log(v / (1.0 - v)) - 1.0 / v + 2.0);
    worst = std::max(worst, std::abs(phi(pair, 0.0, v).value - closed));
  }
  return {worst <= kPhiTol, fmt("max |phi - closed form| = %.3e over %d points", worst, kPhiPoints)};
}

Outcome ac3() {
  const Recurrence rec = classify_recurrence(uniform_pair(), 0.0, 0.6);
  const ExperimentConfig c =
      parse_config_text(R"({"run": {"events": 1000000, "restriction": {"volume": 0.6}}})");
  SimConfig s = make_sim_config(c, 31337);
  s.record_events = false;
  const Trajectory tr = run(s);
  const bool ok = rec == Recurrence::positive_recurrent && tr.empty_returns >= kMinEmptyReturns;
  return {ok, fmt("%s, %llu empty returns", to_string(rec),
                  static_cast<unsigned long long>(tr.empty_returns))};
}

Outcome ac4() {
  const ExperimentConfig c = parse_config_text(
      R"({"run": {"events": 1000000, "seed": 20240601, "burn_in": 0.5, "restriction": {"volume": 0.6}}})");
  const ComparisonReport r = cmd_compare(c).report;
  const bool ok = r.sup_bid <= kSupTol && r.sup_ask <= kSupTol &&
                  std::abs(r.empty_buy_empirical - r.empty_buy_theory) <= kEmptyTol;
  return {ok, fmt("sup_bid=%.4f sup_ask=%.4f empty_buy=%.4f vs f-(J-)=%.4f", r.sup_bid, r.sup_ask,
                  r.empty_buy_empirical, r.empty_buy_theory)};
}

Outcome ac5() {
  SimConfig s{uniform_pair()};
  s.horizon_events = 1000000;
  s.seed = 2718;
  s.burn_in = 0.5;
  const WindowEstimate w = estimate_window(run(s));
  const WindowReport t = v_l(uniform_pair(), 0.0);
  const bool ok = std::abs(w.lo - t.x_minus) <= kWindowTol && std::abs(w.hi - t.x_plus) <= kWindowTol;
  return {ok, fmt("estimate (%.4f, %.4f) vs (%.4f, %.4f)", w.lo, w.hi, t.x_minus, t.x_plus)};
}

Outcome ac6() {
  const std::vector<double> rhos = {0.0, 0.1, 0.2, 0.3, 0.4, 0.45};
  std::vector<double> len;
  for (double rho : rhos) len.push_back(v_l(uniform_pair(), rho).window_length());
  bool ok = true;
  for (std::size_t i = 1; i < len.size(); ++i) ok = ok && len[i] < len[i - 1];
  ok = ok && len.back() < kShrinkRatio * len.front();
  return {ok, fmt("lengths %.4f %.4f %.4f %.4f %.4f %.4f", len[0], len[1], len[2], len[3], len[4], len[5])};
}

Outcome ac7() {
  const ExperimentConfig c = parse_config_text(
      R"({"model": {"rho": 0.5}, "run": {"events": 100000, "seed": 5, "replicas": 50}})");
  const FreezeReport r = cmd_freeze(c).report;
  std::size_t near = 0;
  for (const auto& rep : r.replicas) {
    if (rep.freeze && rep.freeze->midpoint >= 0.45 && rep.freeze->midpoint <= 0.55) ++near;
  }
  const double share = static_cast<double>(near) / static_cast<double>(r.replicas.size());
  return {share >= kCriticalFrozenShare,
          fmt("%zu/%zu frozen with midpoint in [0.45, 0.55]", near, r.replicas.size())};
}

Outcome ac8() {
  const ExperimentConfig c = parse_config_text(
      R"({"model": {"rho": 0.6}, "run": {"events": 100000, "seed": 11, "replicas": 200}})");
  const FreezeReport r = cmd_freeze(c).report;
  bool inside = !r.midpoints.empty();
  std::array<int, 5> bins{};
  for (double m : r.midpoints) {
    inside = inside && m >= kSupercriticalLo && m <= kSupercriticalHi;
    const int k = std::clamp(static_cast<int>((m - 0.4) / 0.04), 0, 4);
    if (m >= 0.4 && m <= 0.6) ++bins[static_cast<std::size_t>(k)];
  }
  const int occupied = static_cast<int>(std::count_if(bins.begin(), bins.end(), [](int n) { return n > 0; }));
  const auto [lo, hi] = std::minmax_element(r.midpoints.begin(), r.midpoints.end());
  const bool ok = inside && r.frozen == r.replicas.size() && r.stddev >= kMinSpread &&
                  occupied >= kMinOccupiedBins;
  return {ok, fmt("%zu/%zu frozen, range [%.4f, %.4f], sd=%.4f, bins %d %d %d %d %d", r.frozen,
                  r.replicas.size(), r.midpoints.empty() ? NAN : *lo, r.midpoints.empty() ? NAN : *hi,
                  r.stddev, bins[0], bins[1], bins[2], bins[3], bins[4])};
}

Outcome ac9() {
  const ExperimentConfig c = parse_config_text(
      R"({"model": {"rho": 0.6}, "run": {"events": 10000, "replicas": 1000}})");
  const GamblerReport g = gambler_scenario(c, 0.3, 3);
  return {g.fraction() >= g.bound - kGamblerMargin,
          fmt("%zu/%zu never dropped below 0.3 (bound %.2f)", g.never_dropped, g.replicas, g.bound)};
}

Outcome ac10() {
  const ExperimentConfig c = parse_config_text(R"({"model": {"preset": "evenodd", "n": 3}})");
  SimConfig s = make_sim_config(c, 77);
  s.horizon_events = 10000;
  for (std::uint64_t k = 100; k <= 10000; k += 100) s.snapshot_at.push_back(k);
  const Trajectory tr = run(s);
  const DiscreteMap psi = DiscreteMap::ceil_half(3);
  std::size_t checked = 0;
  bool ok = true;
  auto check = [&](const OrderBook& b) {
    try {
      const OrderBook img = image_book(b, psi);
      for (const auto* side : {&img.buys(), &img.sells()}) {
        for (const auto& [p, n] : *side) ok = ok && (p == 1.0 || p == 2.0 || p == 3.0);
      }
      if (!img.buys().empty() && !img.sells().empty()) {
        ok = ok && img.buys().rbegin()->first < img.sells().begin()->first;
      }
    } catch (const invalid_map_error&) {
      ok = false;
    }
    ++checked;
  };
  for (const auto& [idx, b] : tr.snapshots) check(b);
  check(tr.final_book);
  return {ok && checked == 101, fmt("%zu snapshot images checked", checked)};
}

Outcome ac11() {
  const ExperimentConfig c = parse_config_text(
      R"({"run": {"events": 20000, "replicas": 4}, "output": {"snapshots": [10000]}})");
  ExperimentConfig one = c, many = c;
  one.run.seed = many.run.seed = 123;
  one.run.threads = 1;
  many.run.threads = 4;
  const auto a = cmd_simulate(one).artifacts.files;
  const auto b = cmd_simulate(many).artifacts.files;
  const auto again = cmd_simulate(one).artifacts.files;
  const bool identical = a == b && a == again && !a.empty();

  // Throughput with 10^6 resting orders, spread over both sides away from the Walras point.
  OrderBook book(PriceInterval(0.0, 1.0));
  for (std::size_t i = 0; i < kPrefill / 2; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(kPrefill / 2);
    book.place(Side::buy, 0.2 * u);
    book.place(Side::sell, 1.0 - 0.2 * u);
  }
  SimConfig s{uniform_pair()};
  s.initial_book = std::move(book);
  s.horizon_events = 1000000;
  s.seed = 99;
  const auto t0 = Clock::now();
  const Trajectory tr = run(s);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const double rate = static_cast<double>(tr.events) / secs;
  const std::size_t resting = tr.final_book.buy_count() + tr.final_book.sell_count();
  return {identical && rate >= kMinThroughput,
          fmt("artifacts %s, %.3g events/s with %zu resting at end", identical ? "identical" : "DIFFER",
              rate, resting)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"AC1 uniform V_L", 1.0, ac1},
      {"AC2 phi closed form", 1.0, ac2},
      {"AC3 recurrence witness", 20.0, ac3},
      {"AC4 ODE vs simulation", 60.0, ac4},
      {"AC5 window estimate", 30.0, ac5},
      {"AC6 window shrinkage", 5.0, ac6},
      {"AC7 critical freeze", 120.0, ac7},
      {"AC8 supercritical support", 300.0, ac8},
      {"AC9 gambler bound", 60.0, ac9},
      {"AC10 discrete image", 5.0, ac10},
      {"AC11 determinism and throughput", 0.0, ac11},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_budget = c.budget_s <= 0.0 || secs < c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += pass ? 0 : 1;
    std::printf("%s %s: %s [%.2fs%s]\n", pass ? "PASS" : "FAIL", c.id, o.detail.c_str(), secs,
                in_budget ? "" : " over budget");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
