#ifndef PHENLCA_VB_HPP
#define PHENLCA_VB_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "phenlca/errors.hpp"
#include "phenlca/math.hpp"
#include "phenlca/rng.hpp"

namespace phenlca {

// ---- Adam ----

struct AdamState {
  std::vector<double> m1, m2;
  std::vector<std::uint64_t> t;  // per-coordinate step counts (lazy updates)

  explicit AdamState(std::size_t dim = 0) : m1(dim, 0.0), m2(dim, 0.0), t(dim, 0) {}
};

// Bias-corrected ascent update of the selected coordinates.
inline void adam_step(AdamState& state, std::span<double> x, std::span<const double> grad,
                      std::span<const std::size_t> coords, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
  for (std::size_t c : coords) {
    auto& m = state.m1[c];
    auto& v = state.m2[c];
    const double g = grad[c];
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const auto tc = ++state.t[c];
    const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(tc)));
    const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(tc)));
    x[c] += lr * mhat / (std::sqrt(vhat) + eps);
  }
}

// Dense variant over every coordinate.
inline void adam_step(AdamState& state, std::span<double> x, std::span<const double> grad,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  std::vector<std::size_t> all(x.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  adam_step(state, x, grad, all, lr, beta1, beta2, eps);
}

// ---- Stopping rule ----

struct StoppingRule {
  std::size_t max_iters = 200000;
  double rel_tol = 5e-3;      // threshold on the rolling-median relative change
  std::size_t window = 20;    // evaluations in the rolling median
  std::size_t patience = 2000;  // evaluations without a new best

  void validate() const {
    if (max_iters < 1) throw config_error("stopping: max_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw config_error("stopping: rel_tol must be positive");
    if (window < 1) throw config_error("stopping: window must be >= 1");
    if (patience < window) throw config_error("stopping: patience must be >= window");
  }
};

struct TracePoint {
  std::size_t iteration = 0;
  double elbo = 0.0;
  double rel_change = std::numeric_limits<double>::quiet_NaN();  // vs previous evaluation
  bool is_best = false;
};

enum class StopReason { none, max_iters, rel_tol, patience };

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::none: return "none";
    case StopReason::max_iters: return "max_iters";
    case StopReason::rel_tol: return "rel_tol";
    case StopReason::patience: return "patience";
  }
  return "none";
}

// Decides whether the optimization should stop given the evaluation trace.
inline StopReason stopping_check(const std::vector<TracePoint>& trace,
                                 const StoppingRule& rule) {
  if (trace.empty()) throw config_error("stopping_check: empty trace");
  if (trace.back().iteration >= rule.max_iters) return StopReason::max_iters;

  if (trace.size() >= rule.window) {
    std::vector<double> changes;
    const std::size_t first = trace.size() - rule.window;
    for (std::size_t i = std::max<std::size_t>(first, 1); i < trace.size(); ++i)
      changes.push_back(trace[i].rel_change);
    if (!changes.empty()) {
      std::sort(changes.begin(), changes.end());
      const std::size_t n = changes.size();
      const double med = n % 2 ? changes[n / 2]
                               : 0.5 * (changes[n / 2 - 1] + changes[n / 2]);
      if (med < rule.rel_tol) return StopReason::rel_tol;
    }
  }

  std::size_t best_idx = 0;
  double best = trace[0].elbo;
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i].elbo > best) {
      best = trace[i].elbo;
      best_idx = i;
    }
  if (trace.size() - 1 - best_idx >= rule.patience) return StopReason::patience;
  return StopReason::none;
}

// ---- Variational state ----

struct VariationalState {
  std::vector<double> mu, log_sigma;
  std::size_t iteration = 0;
  AdamState adam;         // moments for the mean coordinates
  AdamState adam_scales;  // moments for the log-sigma coordinates
  std::vector<TracePoint> trace;

  struct Snapshot {
    std::size_t iteration = 0;
    double elbo = -std::numeric_limits<double>::infinity();
    std::vector<double> mu, log_sigma;
  } best;

  explicit VariationalState(std::size_t dim = 0)
      : mu(dim, 0.0), log_sigma(dim, std::log(0.1)), adam(dim), adam_scales(dim) {}

  std::size_t dim() const { return mu.size(); }

  double entropy() const {
    double h = 0.0;
    for (double ls : log_sigma) h += ls;
    return h + 0.5 * static_cast<double>(dim()) * (log_two_pi + 1.0);
  }
};

// ---- Engine ----
//
// Target requirements:
//   std::size_t dim() const;
//   std::size_t n_global() const;   // local coordinates, one per item, follow
//   std::size_t n_items() const;    // 0 disables minibatching
//   double value_full(std::span<const double> theta) const;
//   double value_batch(std::span<const double> theta,
//                      std::span<const std::size_t> items, double scale) const;
//   double grad_full(std::span<const double> theta, std::span<double> grad) const;
//   void grad_batch(std::span<const double> theta, std::span<const std::size_t> items,
//                   double scale, std::span<double> grad) const;
//   void identify(std::span<double> mu) const;  // label-anchoring hook, may be empty
//
// value/grad include every prior and Jacobian term; grad_batch writes only
// the global coordinates and the locals of the batch items, with the data
// part of global gradients scaled by `scale` and local likelihood gradients
// unscaled.

// Monte Carlo ELBO estimate with full-dimension reparameterized draws. The
// draw order is one z per coordinate per sample, which finite-difference
// checks rely on for common random numbers.
template <class Target>
double elbo_estimate(const VariationalState& q, const Target& target, std::size_t n_mc,
                     Rng& rng) {
  if (n_mc < 1) throw config_error("elbo_estimate: n_mc must be >= 1");
  const std::size_t dim = q.dim();
  std::vector<double> theta(dim);
  double acc = 0.0;
  std::size_t ok = 0;
  for (std::size_t s = 0; s < n_mc; ++s) {
    for (std::size_t i = 0; i < dim; ++i)
      theta[i] = q.mu[i] + std::exp(q.log_sigma[i]) * rng.normal();
    const double v = target.value_full(theta);
    if (std::isfinite(v)) {
      acc += v;
      ++ok;
    }
  }
  if (ok == 0) throw numeric_error("elbo_estimate: every Monte Carlo sample was non-finite");
  return acc / static_cast<double>(ok) + q.entropy();
}

// Minibatch flavor used by the unbiasedness checks: the log-likelihood part
// is computed on `items` and scaled, priors and entropy are never scaled.
template <class Target>
double elbo_estimate_batch(const VariationalState& q, const Target& target,
                           std::span<const std::size_t> items, double scale,
                           std::size_t n_mc, Rng& rng) {
  const std::size_t dim = q.dim();
  std::vector<double> theta(dim);
  double acc = 0.0;
  std::size_t ok = 0;
  for (std::size_t s = 0; s < n_mc; ++s) {
    for (std::size_t i = 0; i < dim; ++i)
      theta[i] = q.mu[i] + std::exp(q.log_sigma[i]) * rng.normal();
    const double v = target.value_batch(theta, items, scale);
    if (std::isfinite(v)) {
      acc += v;
      ++ok;
    }
  }
  if (ok == 0) throw numeric_error("elbo_estimate: every Monte Carlo sample was non-finite");
  return acc / static_cast<double>(ok) + q.entropy();
}

struct ElboGradient {
  std::vector<double> mu, log_sigma;
  double value = 0.0;  // matching ELBO estimate from the same draws
};

// Reparameterization gradient over all coordinates (full-data estimator).
// Entropy enters in closed form: +1 per log_sigma coordinate.
template <class Target>
ElboGradient elbo_gradient(const VariationalState& q, const Target& target,
                           std::size_t n_mc, Rng& rng) {
  if (n_mc < 1) throw config_error("elbo_gradient: n_mc must be >= 1");
  const std::size_t dim = q.dim();
  ElboGradient out;
  out.mu.assign(dim, 0.0);
  out.log_sigma.assign(dim, 0.0);
  std::vector<double> theta(dim), z(dim), grad(dim);
  double acc = 0.0;
  std::size_t ok = 0;
  for (std::size_t s = 0; s < n_mc; ++s) {
    for (std::size_t i = 0; i < dim; ++i) {
      z[i] = rng.normal();
      theta[i] = q.mu[i] + std::exp(q.log_sigma[i]) * z[i];
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    const double v = target.grad_full(theta, grad);
    if (!std::isfinite(v)) continue;
    ++ok;
    acc += v;
    for (std::size_t i = 0; i < dim; ++i) {
      out.mu[i] += grad[i];
      out.log_sigma[i] += grad[i] * z[i] * std::exp(q.log_sigma[i]);
    }
  }
  if (ok == 0) throw numeric_error("elbo_gradient: every Monte Carlo sample was non-finite");
  const double inv = 1.0 / static_cast<double>(ok);
  for (std::size_t i = 0; i < dim; ++i) {
    out.mu[i] *= inv;
    out.log_sigma[i] = out.log_sigma[i] * inv + 1.0;  // entropy gradient
  }
  out.value = acc * inv + q.entropy();
  return out;
}

struct SviOptions {
  double lr = 0.05;
  bool lr_decay = true;  // lr_t = lr / sqrt(t)
  std::size_t n_mc_grad = 8;
  std::size_t n_mc_eval = 64;
  std::size_t minibatch = 0;  // 0 = full data
  std::size_t eval_every = 100;
  StoppingRule rule;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double init_sigma = 0.1;
  std::vector<double> init_mu;  // optional; zeros otherwise
  double divergence_drop = 1e6;

  void validate() const {
    rule.validate();
    if (!(lr > 0.0)) throw config_error("svi: lr must be positive");
    if (n_mc_grad < 1 || n_mc_eval < 1) throw config_error("svi: n_mc must be >= 1");
    if (eval_every < 1) throw config_error("svi: eval_every must be >= 1");
    if (!(init_sigma > 0.0)) throw config_error("svi: init_sigma must be positive");
  }
};

struct SviFit {
  VariationalState state;  // best snapshot loaded into mu/log_sigma
  StopReason stop_reason = StopReason::none;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  double wall_seconds = 0.0;
};

inline void adam_step_scales(VariationalState& q, std::span<const double> gls,
                             std::span<const std::size_t> actives, double lr,
                             const SviOptions& opt) {
  adam_step(q.adam_scales, q.log_sigma, gls, actives, lr, opt.adam_beta1,
            opt.adam_beta2, opt.adam_eps);
}

// Stochastic variational inference loop: Adam ascent on reparameterization
// gradients, periodic fixed-seed ELBO evaluations feeding the stopping rule,
// and best-snapshot bookkeeping. Returns the best recorded snapshot, never
// the last iterate.
template <class Target>
SviFit svi_fit(const Target& target, const SviOptions& opt) {
  opt.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t dim = target.dim();
  const std::size_t n_items = target.n_items();
  const bool has_locals = dim > target.n_global();
  if (has_locals && dim != target.n_global() + n_items)
    throw shape_error("svi_fit: local coordinate layout mismatch");

  VariationalState q(dim);
  if (!opt.init_mu.empty()) {
    if (opt.init_mu.size() != dim) throw shape_error("svi_fit: init_mu length mismatch");
    q.mu = opt.init_mu;
  }
  std::fill(q.log_sigma.begin(), q.log_sigma.end(), std::log(opt.init_sigma));

  Rng grad_rng(opt.seed, 101);
  Rng batch_rng(opt.seed, 202);
  const std::uint64_t eval_seed = opt.seed ^ 0x9e3779b97f4a7c15ULL;

  const std::size_t batch_size =
      opt.minibatch == 0 ? 0 : std::min(opt.minibatch, n_items);
  std::vector<std::size_t> pool(n_items);
  for (std::size_t i = 0; i < n_items; ++i) pool[i] = i;
  std::vector<std::size_t> batch(batch_size);
  std::vector<std::size_t> actives;
  std::vector<double> theta(dim), z(dim), grad(dim), gmu(dim), gls(dim);

  SviFit fit;
  double first_eval = std::numeric_limits<double>::quiet_NaN();

  auto evaluate = [&](std::size_t iter) {
    Rng eval_rng(eval_seed);  // reseeded: comparable traces across evaluations
    target.identify(std::span<double>(q.mu));
    const double elbo = elbo_estimate(q, target, opt.n_mc_eval, eval_rng);
    TracePoint pt;
    pt.iteration = iter;
    pt.elbo = elbo;
    if (!q.trace.empty()) {
      const double prev = q.trace.back().elbo;
      pt.rel_change = std::abs(elbo - prev) / std::max(std::abs(prev), 1e-12);
    }
    if (elbo > q.best.elbo) {
      q.best = {iter, elbo, q.mu, q.log_sigma};
      pt.is_best = true;
    }
    q.trace.push_back(pt);
    ++fit.evaluations;
    if (std::isnan(first_eval)) first_eval = elbo;
    if (elbo < first_eval - opt.divergence_drop)
      throw numeric_error(
          "svi_fit: ELBO collapsed by more than the divergence threshold; "
          "try a smaller learning rate");
  };

  StopReason reason = StopReason::none;
  std::size_t iter = 0;
  while (reason == StopReason::none) {
    ++iter;
    const double lr = opt.lr_decay ? opt.lr / std::sqrt(static_cast<double>(iter)) : opt.lr;

    if (batch_size > 0 && batch_size < n_items) {
      // partial Fisher-Yates for a uniform batch without replacement
      for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t j = i + batch_rng.index(n_items - i);
        std::swap(pool[i], pool[j]);
        batch[i] = pool[i];
      }
      const double scale =
          static_cast<double>(n_items) / static_cast<double>(batch_size);

      actives.clear();
      for (std::size_t g = 0; g < target.n_global(); ++g) actives.push_back(g);
      if (has_locals)
        for (std::size_t b : batch) actives.push_back(target.n_global() + b);

      double mc_ok = 0.0;
      for (std::size_t c : actives) {
        gmu[c] = 0.0;
        gls[c] = 0.0;
      }
      for (std::size_t s = 0; s < opt.n_mc_grad; ++s) {
        for (std::size_t c : actives) {
          z[c] = grad_rng.normal();
          theta[c] = q.mu[c] + std::exp(q.log_sigma[c]) * z[c];
          grad[c] = 0.0;
        }
        target.grad_batch(theta, batch, scale, grad);
        bool finite = true;
        for (std::size_t c : actives)
          if (!std::isfinite(grad[c])) {
            finite = false;
            break;
          }
        if (!finite) continue;
        mc_ok += 1.0;
        for (std::size_t c : actives) {
          gmu[c] += grad[c];
          gls[c] += grad[c] * z[c] * std::exp(q.log_sigma[c]);
        }
      }
      if (mc_ok > 0.0) {
        for (std::size_t c : actives) {
          gmu[c] /= mc_ok;
          gls[c] = gls[c] / mc_ok + 1.0;
        }
        adam_step(q.adam, q.mu, gmu, actives, lr, opt.adam_beta1, opt.adam_beta2,
                  opt.adam_eps);
        // separate moment slots for the scale coordinates
        adam_step_scales(q, gls, actives, lr, opt);
      }
    } else {
      const ElboGradient g = elbo_gradient(q, target, opt.n_mc_grad, grad_rng);
      actives.resize(dim);
      for (std::size_t i = 0; i < dim; ++i) actives[i] = i;
      adam_step(q.adam, q.mu, g.mu, actives, lr, opt.adam_beta1, opt.adam_beta2,
                opt.adam_eps);
      adam_step_scales(q, g.log_sigma, actives, lr, opt);
    }

    q.iteration = iter;
    if (iter % opt.eval_every == 0 || iter >= opt.rule.max_iters) {
      evaluate(iter);
      reason = stopping_check(q.trace, opt.rule);
    }
  }

  q.mu = q.best.mu;
  q.log_sigma = q.best.log_sigma;
  fit.stop_reason = reason;
  fit.iterations = iter;
  fit.state = std::move(q);
  fit.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fit;
}

}  // namespace phenlca

#endif
