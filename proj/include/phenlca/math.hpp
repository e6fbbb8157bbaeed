#ifndef PHENLCA_MATH_HPP
#define PHENLCA_MATH_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace phenlca {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();
inline constexpr double pos_inf = std::numeric_limits<double>::infinity();
inline constexpr double log_two_pi = 1.8378770664093454836;

// expit(x) = exp(x)/(1+exp(x)), sign-split so exp() is never called on a
// large positive argument.
inline double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  if (x > 36.0) return x + std::exp(-x);
  if (x < -36.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// log expit(x)
inline double log_expit(double x) { return -log1pexp(-x); }

inline double log_sum_exp(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = neg_inf;
  for (double x : xs) m = std::max(m, x);
  if (m == neg_inf) return neg_inf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// Bernoulli log pmf with logit-scale parameter: y * alpha - log(1+exp(alpha)).
inline double bernoulli_logit_lpmf(bool y, double alpha) {
  return y ? -log1pexp(-alpha) : -log1pexp(alpha);
}

inline double normal_lpdf(double y, double mu, double var) {
  const double z = y - mu;
  return -0.5 * (log_two_pi + std::log(var)) - z * z / (2.0 * var);
}

// InvGamma(shape c, rate d): p(x) = d^c / Gamma(c) * x^{-c-1} exp(-d/x)
inline double inv_gamma_lpdf(double x, double shape, double rate) {
  if (x <= 0.0) return neg_inf;
  return shape * std::log(rate) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - rate / x;
}

inline double uniform_lpdf(double x, double a, double b) {
  if (x <= a || x >= b) return neg_inf;
  return -std::log(b - a);
}

inline double mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? std::numeric_limits<double>::quiet_NaN()
                    : s / static_cast<double>(xs.size());
}

// Unbiased sample variance.
inline double variance(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(n - 1);
}

// Type-7 (linear interpolation) quantile of an unsorted sample.
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const double h = q * static_cast<double>(xs.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

}  // namespace phenlca

#endif
