#ifndef PHENLCA_TRANSFORMS_HPP
#define PHENLCA_TRANSFORMS_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "phenlca/errors.hpp"
#include "phenlca/math.hpp"
#include "phenlca/types.hpp"

namespace phenlca {

// Flat layout of the parameter vector, shared by the samplers, the
// variational engine and every CSV column header:
//   beta_d | beta_r[j] | beta_y[j] | tau2[j] | beta_w[k] | beta_p[l] | eta[i]
// Constrained and unconstrained vectors use the same offsets; tau2 maps to
// log tau2 and eta to a scaled logit.
struct ParamLayout {
  ModelShape shape;
  std::size_t n_patients = 0;

  std::size_t coef_len() const { return shape.coef_len(); }
  std::size_t beta_d_off() const { return 0; }
  std::size_t beta_r_off(std::size_t j) const { return shape.M + j * coef_len(); }
  std::size_t beta_y_off(std::size_t j) const {
    return shape.M + (shape.J + j) * coef_len();
  }
  std::size_t tau2_off(std::size_t j) const {
    return shape.M + 2 * shape.J * coef_len() + j;
  }
  std::size_t beta_w_off(std::size_t k) const {
    return shape.M + 2 * shape.J * coef_len() + shape.J + k * coef_len();
  }
  std::size_t beta_p_off(std::size_t l) const {
    return beta_w_off(shape.K) + l * coef_len();
  }
  std::size_t eta_off(std::size_t i) const { return n_global() + i; }
  std::size_t n_global() const { return beta_p_off(shape.L); }
  std::size_t dim() const { return n_global() + n_patients; }

  // Canonical column names: entity indices are 1-based (matching x1..xM in
  // the data schema); coefficient positions are 0-based with 0 = intercept
  // and M+1 = latent-class coefficient.
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(dim());
    auto sub = [](const std::string& base, std::size_t a) {
      return base + "[" + std::to_string(a) + "]";
    };
    auto sub2 = [](const std::string& base, std::size_t a, std::size_t b) {
      return base + "[" + std::to_string(a) + "][" + std::to_string(b) + "]";
    };
    for (std::size_t m = 1; m <= shape.M; ++m) out.push_back(sub("beta_d", m));
    for (std::size_t j = 1; j <= shape.J; ++j)
      for (std::size_t m = 0; m < coef_len(); ++m) out.push_back(sub2("beta_r", j, m));
    for (std::size_t j = 1; j <= shape.J; ++j)
      for (std::size_t m = 0; m < coef_len(); ++m) out.push_back(sub2("beta_y", j, m));
    for (std::size_t j = 1; j <= shape.J; ++j) out.push_back(sub("tau2", j));
    for (std::size_t k = 1; k <= shape.K; ++k)
      for (std::size_t m = 0; m < coef_len(); ++m) out.push_back(sub2("beta_w", k, m));
    for (std::size_t l = 1; l <= shape.L; ++l)
      for (std::size_t m = 0; m < coef_len(); ++m) out.push_back(sub2("beta_p", l, m));
    for (std::size_t i = 1; i <= n_patients; ++i) out.push_back(sub("eta", i));
    return out;
  }

  std::vector<double> flatten(const ParamSet& p) const {
    p.validate(shape, n_patients);
    std::vector<double> v(dim());
    std::size_t at = 0;
    auto put = [&](std::span<const double> xs) {
      for (double x : xs) v[at++] = x;
    };
    put(p.beta_d);
    for (const auto& b : p.beta_r) put(b);
    for (const auto& b : p.beta_y) put(b);
    put(p.tau2);
    for (const auto& b : p.beta_w) put(b);
    for (const auto& b : p.beta_p) put(b);
    put(p.eta);
    return v;
  }

  ParamSet unflatten(std::span<const double> v) const {
    if (v.size() != dim()) throw shape_error("parameter vector length mismatch");
    ParamSet p;
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
      std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(at),
                              v.begin() + static_cast<std::ptrdiff_t>(at + n));
      at += n;
      return out;
    };
    p.beta_d = take(shape.M);
    for (std::size_t j = 0; j < shape.J; ++j) p.beta_r.push_back(take(coef_len()));
    for (std::size_t j = 0; j < shape.J; ++j) p.beta_y.push_back(take(coef_len()));
    p.tau2 = take(shape.J);
    for (std::size_t k = 0; k < shape.K; ++k) p.beta_w.push_back(take(coef_len()));
    for (std::size_t l = 0; l < shape.L; ++l) p.beta_p.push_back(take(coef_len()));
    p.eta = take(n_patients);
    return p;
  }
};

// eta = a + (b-a) expit(u); per-coordinate log Jacobian of the constraining
// map is log(b-a) + log s + log(1-s).
inline double eta_from_unconstrained(double u, double a, double b) {
  return a + (b - a) * expit(u);
}

inline double eta_to_unconstrained(double e, double a, double b) {
  if (e <= a || e >= b) throw numeric_error("eta outside (a,b); cannot unconstrain");
  return logit((e - a) / (b - a));
}

inline double eta_log_jacobian(double u, double a, double b) {
  // log s + log(1-s) computed without forming s
  return std::log(b - a) - log1pexp(-u) - log1pexp(u);
}

struct TransformResult {
  std::vector<double> value;
  double log_jacobian;  // of the constraining map (to_constrained direction)
};

// Unconstrained vector for a ParamSet. The returned log_jacobian is for the
// inverse (constraining) map evaluated at the result, so a round trip
// reports a consistent value.
inline TransformResult to_unconstrained(const ParamSet& p, const PriorSpec& priors,
                                        const ParamLayout& layout) {
  std::vector<double> v = layout.flatten(p);
  double lj = 0.0;
  for (std::size_t j = 0; j < layout.shape.J; ++j) {
    const std::size_t at = layout.tau2_off(j);
    if (!(v[at] > 0.0)) throw numeric_error("tau2 must be positive to unconstrain");
    v[at] = std::log(v[at]);
    lj += v[at];  // log |d tau2 / d u| = log tau2
  }
  for (std::size_t i = 0; i < layout.n_patients; ++i) {
    const std::size_t at = layout.eta_off(i);
    v[at] = eta_to_unconstrained(v[at], priors.eta_a, priors.eta_b);
    lj += eta_log_jacobian(v[at], priors.eta_a, priors.eta_b);
  }
  return {std::move(v), lj};
}

// ParamSet from an unconstrained vector plus the log Jacobian of the map.
inline TransformResult to_constrained(std::span<const double> u, const PriorSpec& priors,
                                      const ParamLayout& layout) {
  if (u.size() != layout.dim()) throw shape_error("to_constrained: length mismatch");
  std::vector<double> v(u.begin(), u.end());
  double lj = 0.0;
  for (double x : u)
    if (!std::isfinite(x)) throw numeric_error("non-finite unconstrained value");
  for (std::size_t j = 0; j < layout.shape.J; ++j) {
    const std::size_t at = layout.tau2_off(j);
    lj += v[at];
    v[at] = std::exp(v[at]);
  }
  for (std::size_t i = 0; i < layout.n_patients; ++i) {
    const std::size_t at = layout.eta_off(i);
    lj += eta_log_jacobian(v[at], priors.eta_a, priors.eta_b);
    v[at] = eta_from_unconstrained(v[at], priors.eta_a, priors.eta_b);
  }
  return {std::move(v), lj};
}

inline ParamSet constrained_params(std::span<const double> u, const PriorSpec& priors,
                                   const ParamLayout& layout) {
  return layout.unflatten(to_constrained(u, priors, layout).value);
}

}  // namespace phenlca

#endif
