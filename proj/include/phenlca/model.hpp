#ifndef PHENLCA_MODEL_HPP
#define PHENLCA_MODEL_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "phenlca/errors.hpp"
#include "phenlca/math.hpp"
#include "phenlca/types.hpp"

namespace phenlca {

// (1, x, d) . beta with beta ordered (intercept, covariates, latent).
inline double linear_predictor(std::span<const double> x, int d,
                               std::span<const double> beta) {
  if (beta.size() != x.size() + 2)
    throw shape_error("linear_predictor: coefficient vector length != M+2");
  double lp = beta[0];
  for (std::size_t m = 0; m < x.size(); ++m) lp += x[m] * beta[m + 1];
  if (d) lp += beta[x.size() + 1];
  return lp;
}

// Both class log-terms of the patient likelihood plus their difference.
// `delta` accumulates the log odds directly so the class posterior stays
// exact when all latent coefficients vanish.
struct ClassTerms {
  double t0, t1;     // log [P(D=d) * prod of channel densities], d = 0, 1
  double delta;      // t1 - t0 accumulated term by term
};

inline ClassTerms patient_class_terms(const PatientRecord& rec, const ParamSet& params,
                                      double eta_i) {
  double alpha_d = eta_i;
  for (std::size_t m = 0; m < rec.x.size(); ++m)
    alpha_d += rec.x[m] * params.beta_d[m];

  double t0 = bernoulli_logit_lpmf(false, alpha_d);
  double t1 = bernoulli_logit_lpmf(true, alpha_d);
  double delta = alpha_d;  // exact log prior odds

  const std::size_t J = rec.r.size(), K = rec.w.size(), L = rec.p.size();
  for (std::size_t j = 0; j < J; ++j) {
    const auto& br = params.beta_r[j];
    const double lr0 = linear_predictor(rec.x, 0, br);
    const double lr1 = lr0 + br[rec.x.size() + 1];
    const bool rj = rec.r[j] != 0;
    const double a0 = bernoulli_logit_lpmf(rj, lr0);
    const double a1 = bernoulli_logit_lpmf(rj, lr1);
    t0 += a0;
    t1 += a1;
    delta += a1 - a0;
    if (rj) {  // value term enters only where observed
      const auto& by = params.beta_y[j];
      const double my0 = linear_predictor(rec.x, 0, by);
      const double my1 = my0 + by[rec.x.size() + 1];
      const double b0 = normal_lpdf(rec.y[j], my0, params.tau2[j]);
      const double b1 = normal_lpdf(rec.y[j], my1, params.tau2[j]);
      t0 += b0;
      t1 += b1;
      delta += b1 - b0;
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    const auto& bw = params.beta_w[k];
    const double l0 = linear_predictor(rec.x, 0, bw);
    const double l1 = l0 + bw[rec.x.size() + 1];
    const bool wk = rec.w[k] != 0;
    const double a0 = bernoulli_logit_lpmf(wk, l0);
    const double a1 = bernoulli_logit_lpmf(wk, l1);
    t0 += a0;
    t1 += a1;
    delta += a1 - a0;
  }
  for (std::size_t l = 0; l < L; ++l) {
    const auto& bp = params.beta_p[l];
    const double l0 = linear_predictor(rec.x, 0, bp);
    const double l1 = l0 + bp[rec.x.size() + 1];
    const bool pl = rec.p[l] != 0;
    const double a0 = bernoulli_logit_lpmf(pl, l0);
    const double a1 = bernoulli_logit_lpmf(pl, l1);
    t0 += a0;
    t1 += a1;
    delta += a1 - a0;
  }
  return {t0, t1, delta};
}

// log of the patient likelihood with the latent class summed out.
inline double log_marginal_patient(const PatientRecord& rec, const ParamSet& params,
                                   std::size_t i) {
  if (i >= params.eta.size())
    throw shape_error("log_marginal_patient: patient index out of range");
  const ClassTerms t = patient_class_terms(rec, params, params.eta[i]);
  const double v = log_sum_exp(t.t0, t.t1);
  if (std::isnan(v))
    throw numeric_error("non-finite patient likelihood at patient " + std::to_string(i));
  return v;
}

// P(D_i = 1 | record, params), computed from the accumulated log odds.
inline double class_posterior(const PatientRecord& rec, const ParamSet& params,
                              std::size_t i) {
  if (i >= params.eta.size())
    throw shape_error("class_posterior: patient index out of range");
  const ClassTerms t = patient_class_terms(rec, params, params.eta[i]);
  const double v = expit(t.delta);
  if (std::isnan(v))
    throw numeric_error("non-finite class posterior at patient " + std::to_string(i));
  return v;
}

// Sum of all prior log densities. -inf when tau2 or eta leave their support.
inline double log_prior(const ParamSet& params, const PriorSpec& priors,
                        const ModelShape& shape) {
  double lp = 0.0;
  if (shape.M > 0) lp += mvn_lpdf(params.beta_d, priors.d.mean, priors.d.chol);
  for (const auto& b : params.beta_r) lp += mvn_lpdf(b, priors.r.mean, priors.r.chol);
  for (const auto& b : params.beta_y) lp += mvn_lpdf(b, priors.y.mean, priors.y.chol);
  for (const auto& b : params.beta_w) lp += mvn_lpdf(b, priors.w.mean, priors.w.chol);
  for (const auto& b : params.beta_p) lp += mvn_lpdf(b, priors.p.mean, priors.p.chol);
  for (double t2 : params.tau2) {
    if (t2 <= 0.0) return neg_inf;
    lp += inv_gamma_lpdf(t2, priors.tau_shape, priors.tau_rate);
  }
  for (double e : params.eta) {
    if (e <= priors.eta_a || e >= priors.eta_b) return neg_inf;
    lp += uniform_lpdf(e, priors.eta_a, priors.eta_b);
  }
  return lp;
}

// Marginalized log likelihood of the whole dataset plus the log prior.
inline double log_joint(const Dataset& data, const ParamSet& params,
                        const PriorSpec& priors) {
  if (params.eta.size() != data.n())
    throw shape_error("log_joint: eta length != patient count");
  const double lp = log_prior(params, priors, data.shape);
  if (lp == neg_inf) return neg_inf;
  double ll = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i)
    ll += log_marginal_patient(data.patients[i], params, i);
  return ll + lp;
}

// Sensitivity expit(b0 + b_latent) and specificity 1 - expit(b0), evaluated
// at covariates zero.
inline DerivedReport::SensSpec sens_spec_from(std::span<const double> beta) {
  const std::size_t last = beta.size() - 1;
  return {expit(beta[0] + beta[last]), 1.0 - expit(beta[0])};
}

// Clinical summary of one parameter set. The dataset supplies covariates for
// the prevalence estimate and the stored biomarker scaling for raw-unit
// shifts.
inline DerivedReport derived_quantities(const ParamSet& params, const Dataset& data) {
  DerivedReport rep;
  const ModelShape& s = data.shape;
  for (std::size_t k = 0; k < s.K; ++k) rep.codes.push_back(sens_spec_from(params.beta_w[k]));
  for (std::size_t l = 0; l < s.L; ++l)
    rep.medications.push_back(sens_spec_from(params.beta_p[l]));
  for (std::size_t j = 0; j < s.J; ++j) {
    rep.biomarker_avail.push_back(sens_spec_from(params.beta_r[j]));
    const double shift = params.beta_y[j][s.M + 1];
    rep.shift.push_back(shift);
    const double sd = j < data.y_scale.size() ? data.y_scale[j].sd : 1.0;
    rep.shift_raw.push_back(shift * sd);
  }
  if (!params.eta.empty() && params.eta.size() == data.n()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
      double a = params.eta[i];
      for (std::size_t m = 0; m < s.M; ++m) a += data.patients[i].x[m] * params.beta_d[m];
      acc += expit(a);
    }
    rep.prevalence = acc / static_cast<double>(data.n());
  }
  return rep;
}

// Flat layout of the derived quantities for draw-by-draw summaries.
inline std::vector<std::string> derived_names(const ModelShape& s, const ChannelNames& names) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < s.K; ++k) {
    out.push_back(names.code(k) + " sensitivity");
    out.push_back(names.code(k) + " specificity");
  }
  for (std::size_t l = 0; l < s.L; ++l) {
    out.push_back(names.medication(l) + " sensitivity");
    out.push_back(names.medication(l) + " specificity");
  }
  for (std::size_t j = 0; j < s.J; ++j) {
    out.push_back(names.biomarker(j) + " availability sensitivity");
    out.push_back(names.biomarker(j) + " availability specificity");
  }
  for (std::size_t j = 0; j < s.J; ++j) out.push_back("Mean shift in " + names.biomarker(j));
  for (std::size_t j = 0; j < s.J; ++j)
    out.push_back("Mean shift in " + names.biomarker(j) + " (original units)");
  out.push_back("class prevalence");
  return out;
}

inline std::vector<double> derived_flat(const DerivedReport& rep) {
  std::vector<double> out;
  for (const auto& c : rep.codes) {
    out.push_back(c.sens);
    out.push_back(c.spec);
  }
  for (const auto& m : rep.medications) {
    out.push_back(m.sens);
    out.push_back(m.spec);
  }
  for (const auto& b : rep.biomarker_avail) {
    out.push_back(b.sens);
    out.push_back(b.spec);
  }
  for (double v : rep.shift) out.push_back(v);
  for (double v : rep.shift_raw) out.push_back(v);
  out.push_back(rep.prevalence);
  return out;
}

}  // namespace phenlca

#endif
