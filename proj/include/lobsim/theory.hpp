#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lobsim/curves.hpp"
#include "lobsim/error.hpp"
#include "lobsim/numerics.hpp"

namespace lobsim {

// Equilibrium theory of the model with market-maker rate rho. For rho > 0 every
// quantity is the rho = 0 theory applied to the lowered curves λ̃± = λ± − rho,
// with windows still indexed by the unshifted volume V: J(V) = (λ−^{-1}(V), λ+^{-1}(V)).

inline constexpr double kPhiEdgeMargin = 1e-9;
inline constexpr double kVolumeTolerance = 1e-10;

namespace detail {

inline void check_rho(double rho) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) {
    throw argument_error("market maker rate must be finite and >= 0");
  }
}

inline void require_a5(const DemandSupplyPair& pair, const WalrasPoint& w) {
  if (!(w.volume < pair.v_max())) {
    throw assumption_error("A5", "V_W = " + std::to_string(w.volume) +
                                     " is not below V_max = " + std::to_string(pair.v_max()));
  }
}

// λ̃+(λ−^{-1}(V)) ∧ λ̃−(λ+^{-1}(V)): the smaller opposite-side rate at the edges
// of J(V). Nonincreasing in V.
inline double edge_margin(const DemandSupplyPair& pair, double rho, double v) {
  const double left = pair.demand().inverse(v);
  const double right = pair.supply().inverse(v);
  return std::min(pair.supply().eval_unchecked(left), pair.demand().eval_unchecked(right)) - rho;
}

}  // namespace detail

/// 1 / (V_W − rho)^2, the value of Φ that separates positive recurrence.
inline double recurrence_threshold(const DemandSupplyPair& pair, double rho) {
  detail::check_rho(rho);
  const double vw = walras(pair).volume;
  if (!(rho < vw)) throw domain_error("recurrence threshold needs rho < V_W");
  return 1.0 / ((vw - rho) * (vw - rho));
}

/// sup{V in [V_W, V_max] : λ̃−(λ+^{-1}(V)) ∧ λ̃+(λ−^{-1}(V)) > 0}. Equals V_max
/// when the margin stays positive (e.g. with market orders and rho = 0).
inline double effective_vmax(const DemandSupplyPair& pair, double rho) {
  detail::check_rho(rho);
  const WalrasPoint w = walras(pair);
  const double vmax = pair.v_max();
  if (!(rho < w.volume)) return w.volume;
  if (detail::edge_margin(pair, rho, vmax) > 0.0) return vmax;
  return numerics::bisect_boundary(
      [&](double v) { return detail::edge_margin(pair, rho, v) > 0.0; }, w.volume, vmax, 1e-14);
}

struct PhiValue {
  double value;
  double error_estimate;
};

namespace detail {

// Φ(V), abandoning the sum once it exceeds `cap`: the integrand is positive, so
// the partial value already decides any comparison against the cap.
inline PhiValue phi_capped(const DemandSupplyPair& pair, double rho, double v, double cap);

}  // namespace detail

/// Φ(V) = ∫_{V_W}^{V} {1/λ̃+(λ−^{-1}(W)) + 1/λ̃−(λ+^{-1}(W))} / (W − rho)^2 dW.
///
/// Integrated piecewise by composite Simpson between the volumes where either
/// composition has a kink. Throws domain_error past the integrand blow-up.
inline PhiValue phi(const DemandSupplyPair& pair, double rho, double v) {
  return detail::phi_capped(pair, rho, v, std::numeric_limits<double>::infinity());
}

inline PhiValue detail::phi_capped(const DemandSupplyPair& pair, double rho, double v,
                                   double cap) {
  detail::check_rho(rho);
  const WalrasPoint w = walras(pair);
  if (!(rho < w.volume)) throw domain_error("phi needs rho < V_W");
  const double edge = effective_vmax(pair, rho);
  if (!(v >= w.volume)) throw domain_error("phi: V below V_W");
  if (v > edge - kPhiEdgeMargin) {
    throw domain_error("phi: V = " + std::to_string(v) + " at or past the integrand blow-up at " +
                       std::to_string(edge));
  }
  if (v == w.volume) return {0.0, 0.0};

  const auto& dem = pair.demand();
  const auto& sup = pair.supply();
  auto integrand = [&](double x) {
    const double a = sup.eval_unchecked(dem.inverse(x)) - rho;
    const double b = dem.eval_unchecked(sup.inverse(x)) - rho;
    const double s = x - rho;
    return (1.0 / a + 1.0 / b) / (s * s);
  };

  std::vector<double> cuts{w.volume, v};
  auto add_cut = [&](double c) {
    if (c > w.volume && c < v) cuts.push_back(c);
  };
  for (double r : dem.rates()) add_cut(r);
  for (double r : sup.rates()) add_cut(r);
  for (double x : sup.prices()) add_cut(dem.eval_unchecked(x));
  for (double x : dem.prices()) add_cut(sup.eval_unchecked(x));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  PhiValue out{0.0, 0.0};
  const double span = v - w.volume;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double tol = std::max(1e-10 * (cuts[i + 1] - cuts[i]) / span, 1e-15);
    const auto q = numerics::simpson(integrand, cuts[i], cuts[i + 1], tol);
    out.value += q.value;
    out.error_estimate += q.error_estimate;
    if (out.value > cap) break;
  }
  return out;
}

struct PhiSample {
  double volume;
  double value;
  double error_estimate;
};

/// Φ sampled at `count` equally spaced volumes on [V_W, V_eff − margin].
inline std::vector<PhiSample> phi_table(const DemandSupplyPair& pair, double rho,
                                        std::size_t count = 64) {
  if (count < 2) throw argument_error("phi_table: need at least two samples");
  const double vw = walras(pair).volume;
  const double top = effective_vmax(pair, rho) - kPhiEdgeMargin;
  std::vector<PhiSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double v = k + 1 == count ? top
                                    : vw + (top - vw) * static_cast<double>(k) /
                                               static_cast<double>(count - 1);
    const PhiValue p = phi(pair, rho, v);
    out.push_back({v, p.value, p.error_estimate});
  }
  return out;
}

struct FreezeSupport {
  double lo;
  double hi;
  bool degenerate;  // the single point {x_W}
};

struct WindowReport {
  double rho = 0.0;
  double v_w = 0.0;
  double x_w = 0.0;
  double v_max = 0.0;
  double v_max_effective = 0.0;  // Ṽ_max; equals V_max when rho = 0 and no blow-up
  double v_l = 0.0;
  double x_minus = 0.0;
  double x_plus = 0.0;
  double threshold = 0.0;  // 1 / (V_W − rho)^2; infinite when degenerate
  bool boundary = false;   // V_L reached the effective maximum
  bool degenerate = false; // rho >= V_W: the window is closed
  std::optional<FreezeSupport> freeze;

  double window_length() const noexcept { return x_plus - x_minus; }
};

inline FreezeSupport freeze_support(const DemandSupplyPair& pair, double rho);

/// Luckock's volume of trade and the competitive window J(V_L).
inline WindowReport v_l(const DemandSupplyPair& pair, double rho) {
  detail::check_rho(rho);
  const WalrasPoint w = walras(pair);
  detail::require_a5(pair, w);

  WindowReport rep;
  rep.rho = rho;
  rep.v_w = w.volume;
  rep.x_w = w.price;
  rep.v_max = pair.v_max();

  if (!(rho < w.volume)) {
    rep.degenerate = true;
    rep.v_max_effective = w.volume;
    rep.v_l = w.volume;
    rep.x_minus = w.price;
    rep.x_plus = w.price;
    rep.threshold = std::numeric_limits<double>::infinity();
    if (pair.assumptions().a6) rep.freeze = freeze_support(pair, rho);
    return rep;
  }

  rep.threshold = recurrence_threshold(pair, rho);
  rep.v_max_effective = effective_vmax(pair, rho);
  const double top = rep.v_max_effective - kPhiEdgeMargin;
  const double cap = rep.threshold;
  if (detail::phi_capped(pair, rho, top, cap).value < rep.threshold) {
    rep.boundary = true;
    rep.v_l = rep.v_max_effective;
  } else {
    rep.v_l = numerics::bisect_boundary(
        [&](double v) { return detail::phi_capped(pair, rho, v, cap).value < rep.threshold; },
        w.volume, top,
        0.1 * kVolumeTolerance);
  }
  rep.x_minus = pair.demand().inverse(rep.v_l);
  rep.x_plus = pair.supply().inverse(rep.v_l);
  return rep;
}

/// J(V) = (λ−^{-1}(V), λ+^{-1}(V)).
inline PriceInterval window_for_volume(const DemandSupplyPair& pair, double v) {
  return PriceInterval(pair.demand().inverse(v), pair.supply().inverse(v));
}

enum class Recurrence { positive_recurrent, critical, not_positive_recurrent };

inline const char* to_string(Recurrence r) noexcept {
  switch (r) {
    case Recurrence::positive_recurrent: return "positive-recurrent";
    case Recurrence::critical: return "critical";
    case Recurrence::not_positive_recurrent: return "not-positive-recurrent";
  }
  return "?";
}

/// Recurrence class of the restricted model on J(V). Values of Φ within `tol`
/// (relative to the threshold) of 1/(V_W − rho)^2 are reported as critical.
inline Recurrence classify_recurrence(const DemandSupplyPair& pair, double rho, double v,
                                      double tol = 1e-7) {
  detail::check_rho(rho);
  const WalrasPoint w = walras(pair);
  if (!(rho < w.volume)) throw domain_error("classify_recurrence needs rho < V_W");
  if (!(v > w.volume)) throw domain_error("classify_recurrence: V must exceed V_W");
  const double threshold = recurrence_threshold(pair, rho);
  const double value = detail::phi_capped(pair, rho, v, 2.0 * threshold).value;
  if (std::abs(value - threshold) <= tol * threshold) return Recurrence::critical;
  return value < threshold ? Recurrence::positive_recurrent : Recurrence::not_positive_recurrent;
}

struct LuckockSolution {
  PriceInterval window;
  double rho = 0.0;
  std::vector<double> x;
  std::vector<double> f_minus;  // P[bid <= x]
  std::vector<double> f_plus;   // P[ask >= x]
  double edge_minus = 0.0;      // f−(J−): probability of no buy orders
  double edge_plus = 0.0;       // f+(J+): probability of no sell orders
  double boundary_residual = 0.0;
  bool negative_edge = false;   // f−(J−) or f+(J+) < 0: J is past the recurrent regime
  bool clamped = false;

  double f_minus_at(double p) const { return interpolate(f_minus, p); }
  double f_plus_at(double p) const { return interpolate(f_plus, p); }

 private:
  double interpolate(const std::vector<double>& f, double p) const {
    if (!(p >= x.front() && p <= x.back())) throw domain_error("LuckockSolution: price outside J");
    const auto it = std::upper_bound(x.begin(), x.end(), p);
    if (it == x.end()) return f.back();
    const auto j = static_cast<std::size_t>(std::distance(x.begin(), it));
    const std::size_t i = j - 1;
    const double t = (p - x[i]) / (x[j] - x[i]);
    return f[i] + t * (f[j] - f[i]);
  }
};

/// Solves f− dλ+ + (λ− − rho) df+ = 0, f+ dλ− + (λ+ − rho) df− = 0 on J with
/// f−(J+) = 1 = f+(J−).
///
/// The system is linear, so two RK4 sweeps from J− with f−(J−) = 0 and 1 fix the
/// unknown f−(J−) by one linear solve. Steps are aligned to curve breakpoints.
/// When `clamp_tol` > 0, an edge value in [−clamp_tol, 0) is clamped to zero.
/// `refine` splits every step into that many, keeping the coarse grid nested.
inline LuckockSolution solve_luckock(const DemandSupplyPair& pair, double rho,
                                     const PriceInterval& j, std::size_t grid_size = 4096,
                                     double clamp_tol = 0.0, std::size_t refine = 1) {
  detail::check_rho(rho);
  if (grid_size < 64) throw argument_error("solve_luckock: grid_size must be >= 64");
  if (refine < 1) throw argument_error("solve_luckock: refine must be >= 1");
  if (!pair.interval().contains(j)) throw argument_error("solve_luckock: J must lie inside I");
  const auto& dem = pair.demand();
  const auto& sup = pair.supply();
  if (!(dem.eval_unchecked(j.hi) - rho > 0.0)) {
    throw singular_coefficient_error(j.hi, "demand minus rho is not positive at J+");
  }
  if (!(sup.eval_unchecked(j.lo) - rho > 0.0)) {
    throw singular_coefficient_error(j.lo, "supply minus rho is not positive at J-");
  }

  std::vector<double> knots{j.lo};
  for (double p : pair.merged_breakpoints()) {
    if (p > j.lo && p < j.hi) knots.push_back(p);
  }
  knots.push_back(j.hi);

  LuckockSolution sol;
  sol.window = j;
  sol.rho = rho;
  // Two basis solutions, state (f−, f+): A starts at (0, 1), B at (1, 0).
  std::vector<double> am{0.0}, ap{1.0}, bm{1.0}, bp{0.0};
  sol.x.push_back(j.lo);

  const double steps_total = static_cast<double>(grid_size - 1);
  for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
    const double a = knots[s];
    const double b = knots[s + 1];
    const auto base = static_cast<std::size_t>(std::lround((b - a) / j.length() * steps_total));
    const std::size_t steps = std::max<std::size_t>(1, base) * refine;
    const double h = (b - a) / static_cast<double>(steps);
    const double mid = 0.5 * (a + b);
    const double dd = dem.slope_at(mid);  // λ−' on this segment
    const double ds = sup.slope_at(mid);  // λ+'
    const double d0 = dem.eval_unchecked(a) - rho;
    const double s0 = sup.eval_unchecked(a) - rho;
    auto rhs = [&](double x, double fm, double fp, double& dfm, double& dfp) {
      const double lam_minus = d0 + dd * (x - a);
      const double lam_plus = s0 + ds * (x - a);
      dfm = -fp * dd / lam_plus;
      dfp = -fm * ds / lam_minus;
    };
    auto rk4 = [&](double x, double& fm, double& fp) {
      double k1m, k1p, k2m, k2p, k3m, k3p, k4m, k4p;
      rhs(x, fm, fp, k1m, k1p);
      rhs(x + 0.5 * h, fm + 0.5 * h * k1m, fp + 0.5 * h * k1p, k2m, k2p);
      rhs(x + 0.5 * h, fm + 0.5 * h * k2m, fp + 0.5 * h * k2p, k3m, k3p);
      rhs(x + h, fm + h * k3m, fp + h * k3p, k4m, k4p);
      fm += h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
      fp += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    };
    for (std::size_t k = 0; k < steps; ++k) {
      const double x = a + static_cast<double>(k) * h;
      double fm = am.back(), fp = ap.back();
      rk4(x, fm, fp);
      am.push_back(fm);
      ap.push_back(fp);
      fm = bm.back();
      fp = bp.back();
      rk4(x, fm, fp);
      bm.push_back(fm);
      bp.push_back(fp);
      sol.x.push_back(k + 1 == steps ? b : a + static_cast<double>(k + 1) * h);
    }
  }

  const double denom = bm.back();
  if (!(std::abs(denom) > 1e-300)) {
    throw singular_coefficient_error(j.hi, "solve_luckock: boundary system is singular on J");
  }
  double c = (1.0 - am.back()) / denom;
  if (c < 0.0 && clamp_tol > 0.0 && c >= -clamp_tol) {
    c = 0.0;
    sol.clamped = true;
  }
  const std::size_t n = sol.x.size();
  sol.f_minus.resize(n);
  sol.f_plus.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    sol.f_minus[i] = am[i] + c * bm[i];
    sol.f_plus[i] = ap[i] + c * bp[i];
  }
  sol.edge_minus = sol.f_minus.front();
  sol.edge_plus = sol.f_plus.back();
  sol.boundary_residual = std::abs(sol.f_minus.back() - 1.0) + std::abs(sol.f_plus.front() - 1.0);
  sol.negative_edge = sol.edge_minus < 0.0 || sol.edge_plus < 0.0;
  return sol;
}

/// Max difference between the solution at `grid_size` and the one with every
/// step halved, compared at the shared grid points.
inline double luckock_convergence(const DemandSupplyPair& pair, double rho,
                                  const PriceInterval& j, std::size_t grid_size = 4096) {
  const LuckockSolution coarse = solve_luckock(pair, rho, j, grid_size);
  const LuckockSolution fine = solve_luckock(pair, rho, j, grid_size, 0.0, 2);
  double worst = 0.0;
  for (std::size_t i = 0; i < coarse.x.size(); ++i) {
    worst = std::max(worst, std::abs(coarse.f_minus[i] - fine.f_minus[2 * i]));
    worst = std::max(worst, std::abs(coarse.f_plus[i] - fine.f_plus[2 * i]));
  }
  return worst;
}

/// {x : λ−(x) ∨ λ+(x) <= rho}, the support of the limit price when rho >= V_W.
inline FreezeSupport freeze_support(const DemandSupplyPair& pair, double rho) {
  detail::check_rho(rho);
  if (!pair.assumptions().a6) {
    throw assumption_error("A6", "freeze support needs strictly monotone demand and supply");
  }
  const WalrasPoint w = walras(pair);
  const double slack = 1e-12 * std::max(1.0, w.volume);
  if (rho < w.volume - slack) {
    throw empty_support_error("rho < V_W: prices do not freeze; use v_l for the competitive window");
  }
  const auto& dem = pair.demand();
  const auto& sup = pair.supply();
  const PriceInterval iv = pair.interval();
  if (dem.min_rate() > rho || sup.min_rate() > rho) {
    throw empty_support_error("no price has both demand and supply at or below rho");
  }
  const double lo = dem.max_rate() <= rho ? iv.lo : dem.inverse(rho);
  const double hi = sup.max_rate() <= rho ? iv.hi : sup.inverse(rho);
  const double tiny = 1e-12 * iv.length();
  if (hi - lo <= tiny) return {w.price, w.price, true};
  return {lo, hi, false};
}

/// Gambler's-ruin lower bound 1 − λ+(y)/rho on P[bid >= y forever], starting
/// from a bid at y.
inline double gambler_bound(const DemandSupplyPair& pair, double rho, double y) {
  detail::check_rho(rho);
  if (!pair.interval().contains_open(y)) throw domain_error("gambler_bound: y must lie inside I");
  const double up = pair.supply().eval(y);
  if (!(up < rho)) {
    throw bound_vacuous_error("gambler_bound: supply(y) >= rho, the bound is vacuous");
  }
  return 1.0 - up / rho;
}

}  // namespace lobsim
