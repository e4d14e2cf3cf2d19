#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lobsim/error.hpp"

namespace lobsim {

struct PriceInterval {
  double lo = 0.0;
  double hi = 1.0;

  PriceInterval() = default;
  PriceInterval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
      throw argument_error("price interval endpoints must be finite");
    }
    if (!(lo < hi)) {
      throw argument_error("price interval needs lo < hi");
    }
  }

  double length() const noexcept { return hi - lo; }
  bool contains_closed(double x) const noexcept { return x >= lo && x <= hi; }
  bool contains_open(double x) const noexcept { return x > lo && x < hi; }
  bool contains(const PriceInterval& other) const noexcept {
    return other.lo >= lo && other.hi <= hi;
  }
  friend bool operator==(const PriceInterval&, const PriceInterval&) = default;
};

enum class Direction { decreasing, increasing };

struct Breakpoint {
  double price;
  double rate;
};

/// Piecewise-linear monotone rate curve: a demand function (decreasing) or a
/// supply function (increasing) on a closed price interval.
///
/// The curve also defines the increment measure |dλ| used to draw limit order
/// prices, and the left-continuous inverse used to map a volume to a price.
class MonotoneCurve {
 public:
  MonotoneCurve(std::span<const Breakpoint> points, Direction dir)
      : MonotoneCurve(points, dir, /*allow_negative=*/false) {}

  MonotoneCurve(std::initializer_list<Breakpoint> points, Direction dir)
      : MonotoneCurve(std::span<const Breakpoint>(points.begin(), points.size()), dir) {}

  static MonotoneCurve demand(std::span<const Breakpoint> points) {
    return MonotoneCurve(points, Direction::decreasing);
  }
  static MonotoneCurve supply(std::span<const Breakpoint> points) {
    return MonotoneCurve(points, Direction::increasing);
  }

  Direction direction() const noexcept { return dir_; }
  PriceInterval interval() const { return PriceInterval(x_.front(), x_.back()); }
  std::size_t size() const noexcept { return x_.size(); }
  std::span<const double> prices() const noexcept { return x_; }
  std::span<const double> rates() const noexcept { return r_; }

  double max_rate() const noexcept {
    return dir_ == Direction::decreasing ? r_.front() : r_.back();
  }
  double min_rate() const noexcept {
    return dir_ == Direction::decreasing ? r_.back() : r_.front();
  }

  double eval(double x) const {
    if (!(x >= x_.front() && x <= x_.back())) {
      throw domain_error("eval: price " + std::to_string(x) + " outside curve interval");
    }
    return eval_unchecked(x);
  }

  // No domain check; x must lie in the closed interval.
  double eval_unchecked(double x) const noexcept {
    const std::size_t i = segment_of(x);
    if (x == x_[i]) return r_[i];
    const double t = (x - x_[i]) / (x_[i + 1] - x_[i]);
    return r_[i] + t * (r_[i + 1] - r_[i]);
  }

  // Slope of the segment containing x (right derivative; the last segment at
  // the right endpoint).
  double slope_at(double x) const noexcept {
    const std::size_t i = segment_of(x);
    return (r_[i + 1] - r_[i]) / (x_[i + 1] - x_[i]);
  }

  /// sup{x : λ(x) >= v} for demand curves, inf{x : λ(x) >= v} for supply.
  double inverse(double v) const {
    if (std::isnan(v) || v > max_rate()) {
      throw domain_error("inverse: rate " + std::to_string(v) + " above curve maximum");
    }
    const std::size_t n = x_.size();
    if (dir_ == Direction::decreasing) {
      if (v <= r_.back()) return x_.back();
      // First index whose rate drops below v; r_[0] >= v so j >= 1.
      std::size_t j = 1;
      while (j < n && r_[j] >= v) ++j;
      const std::size_t i = j - 1;
      if (r_[i] == v) return x_[i];
      const double t = (r_[i] - v) / (r_[i] - r_[j]);
      return std::min(x_[j], x_[i] + t * (x_[j] - x_[i]));
    }
    if (v <= r_.front()) return x_.front();
    std::size_t j = 1;
    while (j < n && r_[j] < v) ++j;
    const std::size_t i = j - 1;
    if (r_[j] == v) {
      // inf of the set where the curve first reaches v
      return x_[j];
    }
    const double t = (v - r_[i]) / (r_[j] - r_[i]);
    return std::min(x_[j], x_[i] + t * (x_[j] - x_[i]));
  }

  /// Mass of |dλ| on [a, b].
  double increment_mass(double a, double b) const {
    if (a > b) throw argument_error("increment_mass: a > b");
    return std::abs(eval(b) - eval(a));
  }

  double total_mass() const noexcept { return cum_.back(); }

  /// u-quantile of the probability measure |dλ| / total_mass, i.e.
  /// inf{x : F(x) >= u} with F the normalized cumulative increment.
  double quantile(double u) const {
    if (!(u >= 0.0 && u <= 1.0)) {
      throw domain_error("quantile: u must lie in [0, 1]");
    }
    const double total = cum_.back();
    if (!(total > 0.0)) {
      throw degenerate_measure_error("quantile: curve has zero increment mass");
    }
    const double target = u * total;
    const auto it = std::lower_bound(cum_.begin(), cum_.end(), target);
    const auto j = static_cast<std::size_t>(std::distance(cum_.begin(), it));
    if (j == 0) return x_.front();
    const std::size_t i = j - 1;
    const double t = (target - cum_[i]) / (cum_[j] - cum_[i]);
    return std::min(x_[j], x_[i] + t * (x_[j] - x_[i]));
  }

  MonotoneCurve shifted(double rho) const {
    std::vector<Breakpoint> pts(x_.size());
    for (std::size_t i = 0; i < x_.size(); ++i) pts[i] = {x_[i], r_[i] - rho};
    return MonotoneCurve(pts, dir_, /*allow_negative=*/true);
  }

  /// The same curve on the sub-interval [a, b].
  MonotoneCurve restricted(double a, double b) const {
    if (!(a < b) || a < x_.front() || b > x_.back()) {
      throw argument_error("restricted: [a, b] must be a sub-interval of the curve interval");
    }
    std::vector<Breakpoint> pts;
    pts.push_back({a, eval_unchecked(a)});
    for (std::size_t i = 0; i < x_.size(); ++i) {
      if (x_[i] > a && x_[i] < b) pts.push_back({x_[i], r_[i]});
    }
    pts.push_back({b, eval_unchecked(b)});
    return MonotoneCurve(pts, dir_, /*allow_negative=*/true);
  }

  bool strictly_monotone() const noexcept {
    for (std::size_t i = 0; i + 1 < r_.size(); ++i) {
      if (r_[i] == r_[i + 1]) return false;
    }
    return true;
  }

 private:
  MonotoneCurve(std::span<const Breakpoint> points, Direction dir, bool allow_negative)
      : dir_(dir) {
    if (points.size() < 2) {
      throw argument_error("curve needs at least two breakpoints");
    }
    x_.reserve(points.size());
    r_.reserve(points.size());
    for (const auto& p : points) {
      if (!std::isfinite(p.price) || !std::isfinite(p.rate)) {
        throw argument_error("curve breakpoints must be finite (infinite intervals unsupported)");
      }
      if (!x_.empty() && !(p.price > x_.back())) {
        throw argument_error("curve breakpoint prices must be strictly increasing");
      }
      if (!allow_negative && p.rate < 0.0) {
        throw assumption_error("A4", "negative rate " + std::to_string(p.rate) + " at price " +
                                         std::to_string(p.price));
      }
      if (!r_.empty()) {
        const bool ok = dir == Direction::decreasing ? p.rate <= r_.back() : p.rate >= r_.back();
        if (!ok) {
          throw assumption_error(
              "A1", std::string(dir == Direction::decreasing ? "demand" : "supply") +
                        " curve is not " +
                        (dir == Direction::decreasing ? "nonincreasing" : "nondecreasing") +
                        " at price " + std::to_string(p.price));
        }
      }
      x_.push_back(p.price);
      r_.push_back(p.rate);
    }
    cum_.resize(r_.size());
    for (std::size_t i = 0; i < r_.size(); ++i) cum_[i] = std::abs(r_[i] - r_[0]);
  }

  // Index i of the segment [x_i, x_{i+1}] holding x; the last segment for x = hi.
  std::size_t segment_of(double x) const noexcept {
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    auto i = static_cast<std::size_t>(std::distance(x_.begin(), it));
    if (i == 0) return 0;
    --i;
    return std::min(i, x_.size() - 2);
  }

  Direction dir_;
  std::vector<double> x_;
  std::vector<double> r_;
  std::vector<double> cum_;
};

struct AssumptionReport {
  bool a1 = false;  // monotone in the declared directions
  bool a2 = true;   // continuity: automatic for piecewise-linear curves
  bool a3 = false;  // supply minus demand strictly increasing
  bool a4 = false;  // both curves positive on the open interval
  bool a5 = false;  // V_W < V_max
  bool a6 = false;  // strict monotonicity of both curves
  std::vector<std::string> violations;

  bool basic() const noexcept { return a1 && a2 && a3 && a4; }
};

/// Demand λ− and supply λ+ on a common interval. Construction checks
/// (A1)..(A4) and throws assumption_error naming the first violation.
class DemandSupplyPair {
 public:
  DemandSupplyPair(MonotoneCurve demand, MonotoneCurve supply)
      : demand_(std::move(demand)), supply_(std::move(supply)) {
    check_shape();
    const AssumptionReport rep = assumptions();
    if (!rep.a1) throw assumption_error("A1", rep.violations.front());
    if (!rep.a3) throw assumption_error("A3", first_violation(rep, "A3"));
    if (!rep.a4) throw assumption_error("A4", first_violation(rep, "A4"));
  }

  const MonotoneCurve& demand() const noexcept { return demand_; }
  const MonotoneCurve& supply() const noexcept { return supply_; }
  PriceInterval interval() const { return demand_.interval(); }

  /// λ−(I−) ∧ λ+(I+)
  double v_max() const noexcept { return std::min(demand_.max_rate(), supply_.max_rate()); }

  /// Union of both curves' breakpoint prices, sorted and deduplicated.
  std::vector<double> merged_breakpoints() const {
    std::vector<double> out;
    out.reserve(demand_.size() + supply_.size());
    std::merge(demand_.prices().begin(), demand_.prices().end(), supply_.prices().begin(),
               supply_.prices().end(), std::back_inserter(out));
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  AssumptionReport assumptions() const;

  /// Pair with both curves lowered by rho. The result skips the (A4) check.
  DemandSupplyPair shifted(double rho) const {
    return DemandSupplyPair(demand_.shifted(rho), supply_.shifted(rho), unchecked{});
  }

  DemandSupplyPair restricted(const PriceInterval& j) const {
    if (!interval().contains(j)) {
      throw argument_error("restriction interval must lie inside the model interval");
    }
    return DemandSupplyPair(demand_.restricted(j.lo, j.hi), supply_.restricted(j.lo, j.hi),
                            unchecked{});
  }

 private:
  struct unchecked {};
  DemandSupplyPair(MonotoneCurve demand, MonotoneCurve supply, unchecked)
      : demand_(std::move(demand)), supply_(std::move(supply)) {
    check_shape();
  }

  void check_shape() const {
    if (demand_.direction() != Direction::decreasing) {
      throw assumption_error("A1", "demand curve must be declared nonincreasing");
    }
    if (supply_.direction() != Direction::increasing) {
      throw assumption_error("A1", "supply curve must be declared nondecreasing");
    }
    if (!(demand_.interval() == supply_.interval())) {
      throw argument_error("demand and supply must span the same price interval");
    }
  }

  static std::string first_violation(const AssumptionReport& rep, const std::string& tag) {
    for (const auto& v : rep.violations) {
      if (v.rfind(tag, 0) == 0) return v;
    }
    return tag;
  }

  MonotoneCurve demand_;
  MonotoneCurve supply_;
};

struct WalrasPoint {
  double price = 0.0;   // x_W, leftmost maximizer of λ− ∧ λ+
  double volume = 0.0;  // V_W
  bool unique = true;
};

/// Maximum of λ− ∧ λ+ over the closed interval and where it is attained.
inline WalrasPoint walras(const DemandSupplyPair& pair) {
  const auto& dem = pair.demand();
  const auto& sup = pair.supply();
  const auto grid = pair.merged_breakpoints();
  auto gap = [&](double x) { return sup.eval_unchecked(x) - dem.eval_unchecked(x); };

  WalrasPoint w;
  double crossing;
  if (gap(grid.front()) >= 0.0) {
    w.volume = dem.eval_unchecked(grid.front());
    crossing = grid.front();
  } else if (gap(grid.back()) <= 0.0) {
    w.volume = sup.eval_unchecked(grid.back());
    crossing = sup.inverse(w.volume);
  } else {
    std::size_t k = 0;
    while (gap(grid[k + 1]) < 0.0) ++k;
    // Both curves are linear on [grid[k], grid[k+1]], so the gap is too.
    const double g0 = gap(grid[k]);
    const double g1 = gap(grid[k + 1]);
    const double t = -g0 / (g1 - g0);
    crossing = std::min(grid[k + 1], grid[k] + t * (grid[k + 1] - grid[k]));
    w.volume = std::min(dem.eval_unchecked(crossing), sup.eval_unchecked(crossing));
  }
  // The maximizers form [λ+^{-1}(V_W), λ−^{-1}(V_W)].
  const double left = std::min(sup.inverse(w.volume), crossing);
  const double right = std::max(dem.inverse(w.volume), crossing);
  const double slack = 1e-12 * pair.interval().length();
  w.unique = right - left <= slack;
  w.price = w.unique ? crossing : left;
  return w;
}

inline AssumptionReport DemandSupplyPair::assumptions() const {
  AssumptionReport rep;
  rep.a1 = demand_.direction() == Direction::decreasing &&
           supply_.direction() == Direction::increasing;
  if (!rep.a1) rep.violations.push_back("A1: curve directions");

  const auto grid = merged_breakpoints();
  rep.a3 = true;
  rep.a4 = true;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double a = grid[i];
    const double b = grid[i + 1];
    const double mid = 0.5 * (a + b);
    const double ds = (supply_.eval_unchecked(b) - supply_.eval_unchecked(a)) / (b - a);
    const double dd = (demand_.eval_unchecked(b) - demand_.eval_unchecked(a)) / (b - a);
    if (!(ds - dd > 0.0)) {
      rep.a3 = false;
      rep.violations.push_back("A3: supply minus demand not strictly increasing on [" +
                               std::to_string(a) + ", " + std::to_string(b) + "]");
    }
    // Linear on the segment, so positivity at the midpoint and interior
    // breakpoints covers the whole open interval.
    const bool pos_mid = demand_.eval_unchecked(mid) > 0.0 && supply_.eval_unchecked(mid) > 0.0;
    const bool pos_b = i + 2 == grid.size() ||
                       (demand_.eval_unchecked(b) > 0.0 && supply_.eval_unchecked(b) > 0.0);
    if (!pos_mid || !pos_b) {
      rep.a4 = false;
      rep.violations.push_back("A4: demand or supply not positive near price " +
                               std::to_string(pos_mid ? b : mid));
    }
  }
  if (demand_.min_rate() < 0.0 || supply_.min_rate() < 0.0) {
    rep.a4 = false;
    rep.violations.push_back("A4: negative rate");
  }
  rep.a6 = demand_.strictly_monotone() && supply_.strictly_monotone();
  if (!rep.a6) rep.violations.push_back("A6: a curve has a flat segment");
  if (rep.a1 && rep.a3 && rep.a4) {
    rep.a5 = walras(*this).volume < v_max();
    if (!rep.a5) rep.violations.push_back("A5: V_W is not below V_max");
  } else {
    rep.a5 = false;
  }
  return rep;
}

// Model presets.

/// λ−(x) = 1 − x, λ+(x) = x on [0, 1].
inline DemandSupplyPair uniform_pair() {
  return DemandSupplyPair(MonotoneCurve({{0.0, 1.0}, {1.0, 0.0}}, Direction::decreasing),
                          MonotoneCurve({{0.0, 0.0}, {1.0, 1.0}}, Direction::increasing));
}

/// Even/odd construction on (0, 2n): buy limit density 1 on cells (2k-1, 2k],
/// sell limit density 1 on cells (2k-2, 2k-1], no market orders.
inline DemandSupplyPair evenodd_pair(int n) {
  if (n < 1) throw argument_error("evenodd_pair: n must be >= 1");
  std::vector<Breakpoint> dem;
  std::vector<Breakpoint> sup;
  double d = n;
  double s = 0.0;
  for (int k = 0; k <= 2 * n; ++k) {
    // cell (k-1, k] carries demand density if k is even, supply density if odd
    if (k > 0) {
      if (k % 2 == 0) {
        d -= 1.0;
      } else {
        s += 1.0;
      }
    }
    dem.push_back({static_cast<double>(k), d});
    sup.push_back({static_cast<double>(k), s});
  }
  return DemandSupplyPair(MonotoneCurve(dem, Direction::decreasing),
                          MonotoneCurve(sup, Direction::increasing));
}

/// Piecewise-linear interpolation of λ−(x) = (1 − x)^α, λ+(x) = x^α on [0, 1],
/// with breakpoints clustered toward both endpoints.
inline DemandSupplyPair power_pair(double alpha, int segments = 400, double cluster = 4.0) {
  if (!(alpha > 0.0)) throw argument_error("power_pair: alpha must be positive");
  if (segments < 2 || segments % 2 != 0) {
    throw argument_error("power_pair: segments must be an even number >= 2");
  }
  std::vector<double> xs(static_cast<std::size_t>(segments) + 1);
  const int half = segments / 2;
  for (int k = 0; k <= half; ++k) {
    const double u = static_cast<double>(k) / half;
    xs[static_cast<std::size_t>(k)] = 0.5 * std::pow(u, cluster);
    xs[static_cast<std::size_t>(segments - k)] = 1.0 - 0.5 * std::pow(u, cluster);
  }
  std::vector<Breakpoint> dem;
  std::vector<Breakpoint> sup;
  for (double x : xs) {
    dem.push_back({x, std::pow(1.0 - x, alpha)});
    sup.push_back({x, std::pow(x, alpha)});
  }
  return DemandSupplyPair(MonotoneCurve(dem, Direction::decreasing),
                          MonotoneCurve(sup, Direction::increasing));
}

}  // namespace lobsim
