#pragma once

#include <cmath>
#include <random>

#include "streampoison/core.hpp"

namespace streampoison::numeric {

/// Bisection for a root of f on [lo, hi] given f(lo) and f(hi) of opposite
/// sign (or zero). Stops when the bracket is narrower than tol.
template <typename F>
double bisect(F&& f, double lo, double hi, double tol = 1e-12) {
  double flo = f(lo);
  for (int it = 0; it < 400 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm <= 0.0) == (flo <= 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Unique positive w with (w - 1) e^w = 1; the maximizer of x / (1 + e^x) is
/// x = w.
inline double logistic_ratio_peak() {
  static const double w = bisect([](double v) { return (v - 1.0) * std::exp(v) - 1.0; }, 1.0, 2.0, 1e-15);
  return w;
}

inline Vector gaussian_vector(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

/// Uniform draw from the d-ball of the given radius around center.
inline Vector uniform_in_ball(const Vector& center, double radius, std::mt19937_64& rng) {
  const Eigen::Index d = center.size();
  Vector dir = gaussian_vector(d, rng);
  const double n = dir.norm();
  if (n == 0.0) return center;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = radius * std::pow(u(rng), 1.0 / static_cast<double>(d));
  return center + dir * (r / n);
}

}  // namespace streampoison::numeric
