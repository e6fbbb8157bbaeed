// Conjugate single-parameter target for the variational engine tests:
// y_i ~ N(theta, 1) with theta ~ N(0, prior_var). Closed-form posterior.
#ifndef PHENLCA_TESTS_TOY_TARGET_HPP
#define PHENLCA_TESTS_TOY_TARGET_HPP

#include <cmath>
#include <span>
#include <vector>

namespace toy {

struct GaussianMeanTarget {
  std::vector<double> y;
  double prior_var = 100.0;

  std::size_t dim() const { return 1; }
  std::size_t n_global() const { return 1; }
  std::size_t n_items() const { return y.size(); }

  double posterior_var() const {
    return 1.0 / (static_cast<double>(y.size()) + 1.0 / prior_var);
  }
  double posterior_mean() const {
    double s = 0.0;
    for (double v : y) s += v;
    return posterior_var() * s;
  }

  double value_full(std::span<const double> theta) const {
    return value_batch(theta, {}, 1.0);
  }

  double value_batch(std::span<const double> theta, std::span<const std::size_t> items,
                     double scale) const {
    const double t = theta[0];
    double v = -0.5 * t * t / prior_var;  // prior, up to a constant
    if (items.empty()) {
      for (double yy : y) v += -0.5 * (yy - t) * (yy - t);
    } else {
      double part = 0.0;
      for (std::size_t i : items) part += -0.5 * (y[i] - t) * (y[i] - t);
      v += scale * part;
    }
    return v;
  }

  double grad_full(std::span<const double> theta, std::span<double> grad) const {
    const double t = theta[0];
    double g = -t / prior_var;
    double v = -0.5 * t * t / prior_var;
    for (double yy : y) {
      g += yy - t;
      v += -0.5 * (yy - t) * (yy - t);
    }
    grad[0] += g;
    return v;
  }

  void grad_batch(std::span<const double> theta, std::span<const std::size_t> items,
                  double scale, std::span<double> grad) const {
    const double t = theta[0];
    double g = 0.0;
    for (std::size_t i : items) g += y[i] - t;
    grad[0] += scale * g - t / prior_var;
  }

  void identify(std::span<double>) const {}
};

}  // namespace toy

#endif
