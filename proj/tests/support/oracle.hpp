// Independent reference implementations used as test oracles. These must
// never call into the library code paths they are checking: probabilities
// are formed as plain products and densities from textbook formulas.
#ifndef PHENLCA_TESTS_ORACLE_HPP
#define PHENLCA_TESTS_ORACLE_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "phenlca/rng.hpp"
#include "phenlca/types.hpp"

namespace oracle {

inline double expit_naive(double x) { return std::exp(x) / (1.0 + std::exp(x)); }

inline double normal_pdf_naive(double y, double mu, double var) {
  return std::exp(-(y - mu) * (y - mu) / (2.0 * var)) /
         std::sqrt(2.0 * M_PI * var);
}

// Unlogged per-class probability product for one patient; enumeration over
// the latent class gives the marginal likelihood without any log-sum-exp.
inline double patient_class_product(const phenlca::PatientRecord& rec,
                                    const phenlca::ParamSet& params, double eta_i,
                                    int d) {
  const std::size_t M = rec.x.size();
  auto lp = [&](const std::vector<double>& beta) {
    double v = beta[0];
    for (std::size_t m = 0; m < M; ++m) v += rec.x[m] * beta[m + 1];
    v += d * beta[M + 1];
    return v;
  };
  double alpha_d = eta_i;
  for (std::size_t m = 0; m < M; ++m) alpha_d += rec.x[m] * params.beta_d[m];
  const double p1 = expit_naive(alpha_d);
  double prob = d ? p1 : 1.0 - p1;
  for (std::size_t j = 0; j < rec.r.size(); ++j) {
    const double pr = expit_naive(lp(params.beta_r[j]));
    prob *= rec.r[j] ? pr : 1.0 - pr;
    if (rec.r[j])
      prob *= normal_pdf_naive(rec.y[j], lp(params.beta_y[j]), params.tau2[j]);
  }
  for (std::size_t k = 0; k < rec.w.size(); ++k) {
    const double pw = expit_naive(lp(params.beta_w[k]));
    prob *= rec.w[k] ? pw : 1.0 - pw;
  }
  for (std::size_t l = 0; l < rec.p.size(); ++l) {
    const double pp = expit_naive(lp(params.beta_p[l]));
    prob *= rec.p[l] ? pp : 1.0 - pp;
  }
  return prob;
}

inline double marginal_likelihood_enum(const phenlca::PatientRecord& rec,
                                       const phenlca::ParamSet& params, double eta_i) {
  return patient_class_product(rec, params, eta_i, 0) +
         patient_class_product(rec, params, eta_i, 1);
}

inline double class_posterior_enum(const phenlca::PatientRecord& rec,
                                   const phenlca::ParamSet& params, double eta_i) {
  const double p0 = patient_class_product(rec, params, eta_i, 0);
  const double p1 = patient_class_product(rec, params, eta_i, 1);
  return p1 / (p0 + p1);
}

// Textbook log densities for the prior oracle.
inline double log_normal_naive(double x, double mu, double var) {
  return std::log(normal_pdf_naive(x, mu, var));
}

inline double log_inv_gamma_naive(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - rate / x;
}

// Diagonal-covariance MVN evaluated coordinate by coordinate.
inline double log_mvn_diag_naive(const std::vector<double>& x,
                                 const std::vector<double>& mean, double var) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += log_normal_naive(x[i], mean[i], var);
  return acc;
}

// Random model instances with moderate coefficients, small enough that the
// unlogged enumeration cannot underflow.
struct RandomInstance {
  phenlca::ModelShape shape;
  std::vector<phenlca::PatientRecord> records;
  phenlca::ParamSet params;
};

inline RandomInstance random_instance(phenlca::Rng& rng, std::size_t n_patients,
                                      std::size_t M, std::size_t J, std::size_t K,
                                      std::size_t L) {
  RandomInstance inst;
  inst.shape = {M, J, K, L};
  auto coef = [&](std::size_t len) {
    std::vector<double> beta(len);
    for (auto& b : beta) b = rng.normal(0.0, 1.0);
    return beta;
  };
  inst.params.beta_d = coef(M);
  for (std::size_t j = 0; j < J; ++j) {
    inst.params.beta_r.push_back(coef(M + 2));
    inst.params.beta_y.push_back(coef(M + 2));
    inst.params.tau2.push_back(0.3 + 2.0 * rng.u01());
  }
  for (std::size_t k = 0; k < K; ++k) inst.params.beta_w.push_back(coef(M + 2));
  for (std::size_t l = 0; l < L; ++l) inst.params.beta_p.push_back(coef(M + 2));
  for (std::size_t i = 0; i < n_patients; ++i) {
    inst.params.eta.push_back(rng.uniform(-2.5, 2.5));
    phenlca::PatientRecord rec;
    for (std::size_t m = 0; m < M; ++m) rec.x.push_back(rng.normal());
    for (std::size_t j = 0; j < J; ++j) {
      rec.r.push_back(rng.bernoulli(0.6) ? 1 : 0);
      rec.y.push_back(rec.r[j] ? rng.normal(0.0, 1.5)
                               : std::numeric_limits<double>::quiet_NaN());
    }
    for (std::size_t k = 0; k < K; ++k) rec.w.push_back(rng.bernoulli(0.4) ? 1 : 0);
    for (std::size_t l = 0; l < L; ++l) rec.p.push_back(rng.bernoulli(0.4) ? 1 : 0);
    inst.records.push_back(std::move(rec));
  }
  return inst;
}

// Inverse-CDF sampler for the generalized Pareto distribution with shape k
// (heavy tail for k > 0) and scale sigma.
inline double gpd_sample(phenlca::Rng& rng, double k, double sigma) {
  const double u = rng.u01_pos();  // in (0, 1]
  if (std::abs(k) < 1e-12) return -sigma * std::log(u);
  return sigma * (std::pow(u, -k) - 1.0) / k;
}

}  // namespace oracle

#endif
