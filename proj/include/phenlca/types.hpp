#ifndef PHENLCA_TYPES_HPP
#define PHENLCA_TYPES_HPP

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "phenlca/errors.hpp"
#include "phenlca/linalg.hpp"

namespace phenlca {

// Counts of covariates, biomarkers, clinical codes and medications.
struct ModelShape {
  std::size_t M = 0;  // covariates
  std::size_t J = 0;  // biomarkers (availability indicator + value each)
  std::size_t K = 0;  // clinical codes
  std::size_t L = 0;  // medications

  // Length of one channel coefficient vector: (intercept, covariates, latent).
  std::size_t coef_len() const { return M + 2; }

  void validate() const {
    if (J + K + L < 1)
      throw shape_error("model shape needs at least one observed channel (J+K+L >= 1)");
  }

  bool operator==(const ModelShape&) const = default;
};

// One patient's observed row. Biomarker values are meaningful only where the
// availability flag is 1; missing entries are stored as NaN and never read.
struct PatientRecord {
  std::vector<double> x;         // M covariates
  std::vector<std::uint8_t> r;   // J availability indicators
  std::vector<double> y;         // J biomarker values (NaN where r=0)
  std::vector<std::uint8_t> w;   // K code indicators
  std::vector<std::uint8_t> p;   // L medication indicators

  void validate(const ModelShape& s, std::size_t row = 0) const {
    auto fail = [row](const std::string& what) {
      throw shape_error("patient record " + std::to_string(row) + ": " + what);
    };
    if (x.size() != s.M) fail("covariate count");
    if (r.size() != s.J || y.size() != s.J) fail("biomarker count");
    if (w.size() != s.K) fail("code count");
    if (p.size() != s.L) fail("medication count");
    for (std::size_t j = 0; j < s.J; ++j) {
      if (r[j] > 1) fail("availability flag not in {0,1}");
      if (r[j] == 1 && !std::isfinite(y[j])) fail("biomarker value missing where r=1");
    }
    for (auto v : w)
      if (v > 1) fail("code flag not in {0,1}");
    for (auto v : p)
      if (v > 1) fail("medication flag not in {0,1}");
    for (double v : x)
      if (!std::isfinite(v)) fail("non-finite covariate");
  }
};

// Linear standardization y_std = (y - mean) / sd applied per biomarker at
// ingestion; kept so reports can restate shifts in original units.
struct BiomarkerScale {
  double mean = 0.0;
  double sd = 1.0;
};

struct Dataset {
  ModelShape shape;
  std::vector<PatientRecord> patients;
  std::vector<BiomarkerScale> y_scale;  // per biomarker; empty if raw
  bool standardized = false;

  std::size_t n() const { return patients.size(); }

  void validate() const {
    shape.validate();
    for (std::size_t i = 0; i < patients.size(); ++i)
      patients[i].validate(shape, i);
  }
};

// All model parameters in constrained space. Channel coefficient vectors are
// ordered (intercept, covariates 1..M, latent-class coefficient).
struct ParamSet {
  std::vector<double> beta_d;                    // M (no intercept; eta absorbs it)
  std::vector<std::vector<double>> beta_r;       // J x (M+2)
  std::vector<std::vector<double>> beta_y;       // J x (M+2)
  std::vector<double> tau2;                      // J, > 0
  std::vector<std::vector<double>> beta_w;       // K x (M+2)
  std::vector<std::vector<double>> beta_p;       // L x (M+2)
  std::vector<double> eta;                       // one per patient, in (a,b)

  void validate(const ModelShape& s, std::size_t n_patients) const {
    auto fail = [](const std::string& what) { throw shape_error("param set: " + what); };
    if (beta_d.size() != s.M) fail("beta_d length");
    auto check_block = [&](const std::vector<std::vector<double>>& b, std::size_t count,
                           const char* name) {
      if (b.size() != count) fail(std::string(name) + " block count");
      for (const auto& v : b)
        if (v.size() != s.coef_len()) fail(std::string(name) + " vector length");
    };
    check_block(beta_r, s.J, "beta_r");
    check_block(beta_y, s.J, "beta_y");
    check_block(beta_w, s.K, "beta_w");
    check_block(beta_p, s.L, "beta_p");
    if (tau2.size() != s.J) fail("tau2 length");
    if (eta.size() != n_patients) fail("eta length");
  }
};

// Prior hyperparameters. MVN blocks are shared across the entries of a
// channel (all beta_w[k] draw from the same MVN, and so on).
struct GaussianPrior {
  std::vector<double> mean;
  Matrix cov;
  Cholesky chol;  // precomputed

  GaussianPrior() = default;
  GaussianPrior(std::vector<double> m, Matrix c)
      : mean(std::move(m)), cov(std::move(c)), chol(cov) {
    if (mean.size() != cov.size())
      throw config_error("prior mean/covariance dimension mismatch");
  }
};

struct PriorSpec {
  GaussianPrior d;  // dimension M (possibly 0)
  GaussianPrior r, y, w, p;  // dimension M+2
  double eta_a = -3.0, eta_b = 3.0;
  double tau_shape = 0.1, tau_rate = 0.1;

  void validate(const ModelShape& s) const {
    if (!(eta_a < eta_b)) throw config_error("eta bounds must satisfy a < b");
    if (!(tau_shape > 0.0) || !(tau_rate > 0.0))
      throw config_error("tau prior shape and rate must be positive");
    if (d.mean.size() != s.M) throw config_error("sigma_d dimension != M");
    const std::size_t c = s.coef_len();
    if (r.mean.size() != c || y.mean.size() != c || w.mean.size() != c ||
        p.mean.size() != c)
      throw config_error("channel prior dimension != M+2");
  }
};

// Weakly informative defaults: zero-mean blocks with diagonal 2.5^2
// covariance, except the biomarker latent-shift prior mean of +1, which
// anchors the disease class to elevated biomarker values.
inline PriorSpec default_priors(const ModelShape& s) {
  const double var = 2.5 * 2.5;
  PriorSpec ps;
  ps.d = GaussianPrior(std::vector<double>(s.M, 0.0), Matrix(s.M, var));
  const std::size_t c = s.coef_len();
  std::vector<double> mu_y(c, 0.0);
  mu_y[c - 1] = 1.0;
  ps.r = GaussianPrior(std::vector<double>(c, 0.0), Matrix(c, var));
  ps.y = GaussianPrior(std::move(mu_y), Matrix(c, var));
  ps.w = GaussianPrior(std::vector<double>(c, 0.0), Matrix(c, var));
  ps.p = GaussianPrior(std::vector<double>(c, 0.0), Matrix(c, var));
  return ps;
}

// Optional display names for report rows.
struct ChannelNames {
  std::vector<std::string> biomarkers, codes, medications;

  std::string biomarker(std::size_t j) const {
    return j < biomarkers.size() ? biomarkers[j] : "biomarker " + std::to_string(j + 1);
  }
  std::string code(std::size_t k) const {
    return k < codes.size() ? codes[k] : "code " + std::to_string(k + 1);
  }
  std::string medication(std::size_t l) const {
    return l < medications.size() ? medications[l] : "medication " + std::to_string(l + 1);
  }
};

// Clinical quantities derived from one parameter set.
struct DerivedReport {
  struct SensSpec {
    double sens = 0.0, spec = 0.0;
  };
  std::vector<SensSpec> codes;            // per k
  std::vector<SensSpec> medications;      // per l
  std::vector<SensSpec> biomarker_avail;  // per j, from beta_r
  std::vector<double> shift;              // per j, model (standardized) scale
  std::vector<double> shift_raw;          // per j, original units
  double prevalence = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace phenlca

#endif
