#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "lobsim/error.hpp"

namespace lobsim::numerics {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t intervals = 0;
  bool converged = false;
};

// Composite Simpson on [a, b], doubling the number of panels until two
// successive estimates differ by less than `tol`. The returned error estimate
// is the Richardson bound |S_2n - S_n| / 15.
template <class F>
QuadratureResult simpson(F&& f, double a, double b, double tol = 1e-10,
                         std::size_t max_intervals = std::size_t{1} << 22) {
  QuadratureResult out;
  if (a == b) {
    out.converged = true;
    return out;
  }
  std::size_t n = 2;
  double h = (b - a) / static_cast<double>(n);
  double ends = f(a) + f(b);
  double odd = f(a + h);
  double even = 0.0;
  double prev = (ends + 4.0 * odd + 2.0 * even) * h / 3.0;
  while (n < max_intervals) {
    // New midpoints become the odd set; the old interior points are all even.
    even += odd;
    n *= 2;
    h = (b - a) / static_cast<double>(n);
    odd = 0.0;
    for (std::size_t i = 1; i < n; i += 2) {
      odd += f(a + static_cast<double>(i) * h);
    }
    const double cur = (ends + 4.0 * odd + 2.0 * even) * h / 3.0;
    const double diff = std::abs(cur - prev);
    out.value = cur;
    out.error_estimate = diff / 15.0;
    out.intervals = n;
    if (diff < tol) {
      out.converged = true;
      return out;
    }
    prev = cur;
  }
  return out;
}

// Bisection for a monotone predicate: returns the boundary between the
// region where `below(x)` is true (left) and false (right), to width `tol`.
template <class Pred>
double bisect_boundary(Pred&& below, double lo, double hi, double tol = 1e-10) {
  if (!(lo <= hi)) {
    throw argument_error("bisect_boundary: empty bracket");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (below(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace lobsim::numerics
