#ifndef PHENLCA_MODEL_TARGET_HPP
#define PHENLCA_MODEL_TARGET_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "phenlca/draws.hpp"
#include "phenlca/math.hpp"
#include "phenlca/model.hpp"
#include "phenlca/rng.hpp"
#include "phenlca/transforms.hpp"
#include "phenlca/types.hpp"
#include "phenlca/vb.hpp"

namespace phenlca {

namespace target_detail {

// expit and both Bernoulli log pmfs from a single exp() call.
struct BernLogit {
  double prob;  // expit(lp)
  double lp1;   // log pmf at 1
  double lp0;   // log pmf at 0
};

inline BernLogit bern_logit_eval(double lp) {
  if (lp >= 0.0) {
    const double q = std::exp(-lp);
    const double l = std::log1p(q);
    return {1.0 / (1.0 + q), -l, -lp - l};
  }
  const double q = std::exp(lp);
  const double l = std::log1p(q);
  return {q / (1.0 + q), lp - l, -l};
}

}  // namespace target_detail

// Unconstrained-space posterior density of the phenotype model with the
// latent class marginalized, exposing value and analytic gradient in the
// form the variational engine consumes. Coordinates follow ParamLayout with
// tau2 as log tau2 and eta as the scaled logit; all Jacobian terms are
// folded into the reported density.
class ModelTarget {
 public:
  ModelTarget(const Dataset& data, const PriorSpec& priors, int anchor_biomarker = 0)
      : data_(data),
        priors_(priors),
        layout_{data.shape, data.n()},
        anchor_(anchor_biomarker) {
    priors.validate(data.shape);
  }

  const ParamLayout& layout() const { return layout_; }
  std::size_t dim() const { return layout_.dim(); }
  std::size_t n_global() const { return layout_.n_global(); }
  std::size_t n_items() const { return data_.n(); }

  double value_full(std::span<const double> theta) const {
    return eval<false>(theta, {}, 1.0, {});
  }

  double value_batch(std::span<const double> theta, std::span<const std::size_t> items,
                     double scale) const {
    return eval<false>(theta, items, scale, {});
  }

  double grad_full(std::span<const double> theta, std::span<double> grad) const {
    return eval<true>(theta, {}, 1.0, grad);
  }

  void grad_batch(std::span<const double> theta, std::span<const std::size_t> items,
                  double scale, std::span<double> grad) const {
    eval<true>(theta, items, scale, grad);
  }

  // Label anchoring: folds the mean vector when the anchor biomarker's
  // latent shift is negative, mirroring the sampler's reflection.
  void identify(std::span<double> mu) const {
    if (anchor_ < 0 || static_cast<std::size_t>(anchor_) >= layout_.shape.J) return;
    if (priors_.eta_a != -priors_.eta_b) return;
    const std::size_t M = layout_.shape.M;
    if (mu[layout_.beta_y_off(static_cast<std::size_t>(anchor_)) + M + 1] >= 0.0) return;
    auto fold = [&](std::size_t off) {
      mu[off] += mu[off + M + 1];
      mu[off + M + 1] = -mu[off + M + 1];
    };
    for (std::size_t j = 0; j < layout_.shape.J; ++j) {
      fold(layout_.beta_r_off(j));
      fold(layout_.beta_y_off(j));
    }
    for (std::size_t k = 0; k < layout_.shape.K; ++k) fold(layout_.beta_w_off(k));
    for (std::size_t l = 0; l < layout_.shape.L; ++l) fold(layout_.beta_p_off(l));
    for (std::size_t m = 0; m < M; ++m) mu[m] = -mu[m];
    for (std::size_t i = 0; i < layout_.n_patients; ++i)
      mu[layout_.eta_off(i)] = -mu[layout_.eta_off(i)];
  }

 private:
  // Single code path for value and gradient, full data or scaled batch.
  // Batch mode scales global likelihood gradients by `scale` and leaves the
  // per-patient eta gradients unscaled, matching the SVI local-factor
  // update convention. Priors are never scaled.
  template <bool WithGrad>
  double eval(std::span<const double> theta, std::span<const std::size_t> items,
              double scale, std::span<double> grad) const {
    using target_detail::bern_logit_eval;
    using target_detail::BernLogit;

    const ModelShape& s = layout_.shape;
    const std::size_t M = s.M;
    const double a = priors_.eta_a, b = priors_.eta_b;

    const bool batched = !items.empty() || scale != 1.0;
    double value = prior_term<WithGrad>(theta, grad, WithGrad && batched ? items
                                                      : std::span<const std::size_t>{});

    const std::size_t count = batched ? items.size() : data_.n();

    // scratch reused across patients
    thread_local std::vector<double> g0, g1;
    const std::size_t coef = s.coef_len();

    for (std::size_t idx = 0; idx < count; ++idx) {
      const std::size_t i = batched ? items[idx] : idx;
      const PatientRecord& rec = data_.patients[i];

      const std::size_t u_off = layout_.eta_off(i);
      const double u = theta[u_off];
      const double s_u = expit(u);
      const double eta = a + (b - a) * s_u;

      double alpha = eta;
      for (std::size_t m = 0; m < M; ++m) alpha += rec.x[m] * theta[m];
      const BernLogit bd = bern_logit_eval(alpha);

      double t0 = bd.lp0, t1 = bd.lp1;

      if constexpr (WithGrad) {
        g0.assign(n_global(), 0.0);
        g1.assign(n_global(), 0.0);
      }

      auto channel = [&](std::size_t off, bool obs) {
        double lp0v = theta[off];
        for (std::size_t m = 0; m < M; ++m) lp0v += rec.x[m] * theta[off + 1 + m];
        const double lp1v = lp0v + theta[off + M + 1];
        const BernLogit c0 = bern_logit_eval(lp0v);
        const BernLogit c1 = bern_logit_eval(lp1v);
        t0 += obs ? c0.lp1 : c0.lp0;
        t1 += obs ? c1.lp1 : c1.lp0;
        if constexpr (WithGrad) {
          const double e0 = (obs ? 1.0 : 0.0) - c0.prob;
          const double e1 = (obs ? 1.0 : 0.0) - c1.prob;
          g0[off] += e0;
          g1[off] += e1;
          for (std::size_t m = 0; m < M; ++m) {
            g0[off + 1 + m] += e0 * rec.x[m];
            g1[off + 1 + m] += e1 * rec.x[m];
          }
          g1[off + M + 1] += e1;
        }
      };

      for (std::size_t j = 0; j < s.J; ++j) {
        channel(layout_.beta_r_off(j), rec.r[j] != 0);
        if (rec.r[j]) {
          const std::size_t off = layout_.beta_y_off(j);
          const std::size_t voff = layout_.tau2_off(j);
          const double tau2 = std::exp(theta[voff]);
          double m0 = theta[off];
          for (std::size_t m = 0; m < M; ++m) m0 += rec.x[m] * theta[off + 1 + m];
          const double m1 = m0 + theta[off + M + 1];
          const double r0 = rec.y[j] - m0, r1 = rec.y[j] - m1;
          const double base = -0.5 * (log_two_pi + theta[voff]);
          t0 += base - r0 * r0 / (2.0 * tau2);
          t1 += base - r1 * r1 / (2.0 * tau2);
          if constexpr (WithGrad) {
            const double e0 = r0 / tau2, e1 = r1 / tau2;
            g0[off] += e0;
            g1[off] += e1;
            for (std::size_t m = 0; m < M; ++m) {
              g0[off + 1 + m] += e0 * rec.x[m];
              g1[off + 1 + m] += e1 * rec.x[m];
            }
            g1[off + M + 1] += e1;
            g0[voff] += -0.5 + r0 * r0 / (2.0 * tau2);
            g1[voff] += -0.5 + r1 * r1 / (2.0 * tau2);
          }
        }
      }
      for (std::size_t k = 0; k < s.K; ++k)
        channel(layout_.beta_w_off(k), rec.w[k] != 0);
      for (std::size_t l = 0; l < s.L; ++l)
        channel(layout_.beta_p_off(l), rec.p[l] != 0);

      const double li = log_sum_exp(t0, t1);
      value += scale * li;

      if constexpr (WithGrad) {
        const double rho1 = expit(t1 - t0);
        const double rho0 = 1.0 - rho1;
        for (std::size_t c = 0; c < n_global(); ++c) {
          const double g = rho0 * g0[c] + rho1 * g1[c];
          if (g != 0.0) grad[c] += scale * g;
        }
        // D-model gradient: beta_d (global, scaled) and eta (local, unscaled)
        const double gd = rho1 - bd.prob;
        for (std::size_t m = 0; m < M; ++m) grad[m] += scale * gd * rec.x[m];
        grad[u_off] += gd * (b - a) * s_u * (1.0 - s_u);
      }
    }
    return value;
  }

  // Priors plus transform Jacobians. When `eta_items` is non-empty only
  // those patients' eta prior terms are visited (the gradient-only batch
  // path, where values and non-batch gradients are discarded anyway).
  template <bool WithGrad>
  double prior_term(std::span<const double> theta, std::span<double> grad,
                    std::span<const std::size_t> eta_items = {}) const {
    const ModelShape& s = layout_.shape;
    double value = 0.0;

    thread_local std::vector<double> block, gblock;
    auto mvn_block = [&](std::size_t off, const GaussianPrior& prior) {
      const std::size_t n = prior.mean.size();
      block.assign(theta.begin() + static_cast<std::ptrdiff_t>(off),
                   theta.begin() + static_cast<std::ptrdiff_t>(off + n));
      value += mvn_lpdf(block, prior.mean, prior.chol);
      if constexpr (WithGrad) {
        gblock.assign(n, 0.0);
        mvn_lpdf_grad(block, prior.mean, prior.chol, gblock);
        for (std::size_t c = 0; c < n; ++c) grad[off + c] += gblock[c];
      }
    };

    if (s.M > 0) mvn_block(layout_.beta_d_off(), priors_.d);
    for (std::size_t j = 0; j < s.J; ++j) {
      mvn_block(layout_.beta_r_off(j), priors_.r);
      mvn_block(layout_.beta_y_off(j), priors_.y);
    }
    for (std::size_t k = 0; k < s.K; ++k) mvn_block(layout_.beta_w_off(k), priors_.w);
    for (std::size_t l = 0; l < s.L; ++l) mvn_block(layout_.beta_p_off(l), priors_.p);

    for (std::size_t j = 0; j < s.J; ++j) {
      const std::size_t voff = layout_.tau2_off(j);
      const double v = theta[voff];
      // InvGamma(c,d) density of exp(v) plus the log tau2 Jacobian
      value += priors_.tau_shape * std::log(priors_.tau_rate) -
               std::lgamma(priors_.tau_shape) - priors_.tau_shape * v -
               priors_.tau_rate * std::exp(-v);
      if constexpr (WithGrad)
        grad[voff] += -priors_.tau_shape + priors_.tau_rate * std::exp(-v);
    }
    auto eta_term = [&](std::size_t i) {
      const std::size_t off = layout_.eta_off(i);
      const double u = theta[off];
      // Unif(a,b) density with Jacobian: log s + log(1-s)
      value += -log1pexp(-u) - log1pexp(u);
      if constexpr (WithGrad) grad[off] += 1.0 - 2.0 * expit(u);
    };
    if (eta_items.empty()) {
      for (std::size_t i = 0; i < layout_.n_patients; ++i) eta_term(i);
    } else {
      for (std::size_t i : eta_items) eta_term(i);
    }
    return value;
  }

  const Dataset& data_;
  const PriorSpec& priors_;
  ParamLayout layout_;
  int anchor_;
};

// Independent posterior draws from the fitted mean-field family, mapped to
// constrained space.
inline DrawMatrix vb_posterior_draws(const VariationalState& q, const PriorSpec& priors,
                                     const ParamLayout& layout, std::size_t n, Rng& rng) {
  if (n < 1) throw config_error("vb_posterior_draws: n must be >= 1");
  if (q.dim() != layout.dim()) throw shape_error("vb_posterior_draws: dimension mismatch");
  DrawMatrix out;
  out.names = layout.names();
  out.rows = n;
  out.data.resize(n * layout.dim());
  std::vector<double> theta(layout.dim());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < theta.size(); ++i)
      theta[i] = q.mu[i] + std::exp(q.log_sigma[i]) * rng.normal();
    const TransformResult con = to_constrained(theta, priors, layout);
    std::copy(con.value.begin(), con.value.end(), out.data.begin() + r * layout.dim());
  }
  return out;
}

}  // namespace phenlca

#endif
