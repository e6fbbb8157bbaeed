#ifndef PHENLCA_SYNTH_HPP
#define PHENLCA_SYNTH_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "phenlca/config_io.hpp"
#include "phenlca/errors.hpp"
#include "phenlca/math.hpp"
#include "phenlca/model.hpp"
#include "phenlca/rng.hpp"
#include "phenlca/types.hpp"

namespace phenlca {

// Inverts the sensitivity/specificity identities: sens = expit(b0 + b1),
// spec = 1 - expit(b0).
struct InterceptShift {
  double intercept, shift;
};

inline InterceptShift beta_from_sens_spec(double sens, double spec) {
  if (!(sens > 0.0 && sens < 1.0) || !(spec > 0.0 && spec < 1.0))
    throw config_error(
        "sensitivity/specificity must lie strictly inside (0,1); clamp boundary "
        "targets (e.g. 1.00) away from the edge first");
  const double b0 = logit(1.0 - spec);
  return {b0, logit(sens) - b0};
}

struct CovariateSpec {
  enum class Kind { normal, bernoulli } kind = Kind::normal;
  double q = 0.5;  // bernoulli success probability
};

struct BinaryChannelSpec {
  double sens = 0.5, spec = 0.5;
  std::vector<double> beta;  // optional explicit (M+2) coefficients
  std::string name;
};

struct BiomarkerSpec {
  double avail_sens = 0.9, avail_spec = 0.5;  // availability channel targets
  double mean = 0.0, shift = 1.0, sd = 1.0;   // value model, original units
  std::vector<double> beta_r, beta_y;         // optional explicit coefficients
  std::string name;
};

struct SynthConfig {
  ModelShape shape;
  std::size_t n = 1000;
  double prevalence = 0.05;
  std::uint64_t seed = 0;
  double clamp_eps = 1e-4;  // pulls boundary targets inside (0,1)
  std::vector<CovariateSpec> covariates;  // length M
  std::vector<double> beta_d;             // length M
  double eta_a = -3.0, eta_b = 3.0;
  std::vector<BiomarkerSpec> biomarkers;     // length J
  std::vector<BinaryChannelSpec> codes;      // length K
  std::vector<BinaryChannelSpec> medications;// length L

  void validate() const {
    shape.validate();
    if (n < 1) throw config_error("synth: n must be >= 1");
    if (!(prevalence > 0.0 && prevalence < 1.0))
      throw config_error("synth: prevalence must be in (0,1)");
    if (!(eta_a < eta_b)) throw config_error("synth: eta bounds must satisfy a < b");
    if (covariates.size() != shape.M) throw config_error("synth: covariates length != M");
    if (beta_d.size() != shape.M) throw config_error("synth: beta_d length != M");
    if (biomarkers.size() != shape.J) throw config_error("synth: biomarkers length != J");
    if (codes.size() != shape.K) throw config_error("synth: codes length != K");
    if (medications.size() != shape.L) throw config_error("synth: medications length != L");
    for (const auto& b : biomarkers)
      if (!(b.sd > 0.0)) throw config_error("synth: biomarker sd must be positive");
  }

  ChannelNames names() const {
    ChannelNames out;
    for (const auto& b : biomarkers) out.biomarkers.push_back(b.name);
    for (const auto& c : codes) out.codes.push_back(c.name);
    for (const auto& m : medications) out.medications.push_back(m.name);
    return out;
  }
};

struct SynthResult {
  Dataset data;                 // raw units
  ParamSet truth;               // generating parameters (raw units)
  double d_offset = 0.0;        // scalar added to the D linear predictor
  std::vector<std::uint8_t> d_true;
  double prevalence_empirical = 0.0;
};

namespace detail {

inline double clamp_prob(double p, double eps) {
  return std::min(1.0 - eps, std::max(eps, p));
}

// Coefficient vector (intercept, covariates = 0, latent shift) from targets,
// boundary targets clamped.
inline std::vector<double> channel_beta(const BinaryChannelSpec& c, std::size_t M,
                                        double eps) {
  if (!c.beta.empty()) {
    if (c.beta.size() != M + 2) throw config_error("synth: explicit beta length != M+2");
    return c.beta;
  }
  const InterceptShift is =
      beta_from_sens_spec(clamp_prob(c.sens, eps), clamp_prob(c.spec, eps));
  std::vector<double> beta(M + 2, 0.0);
  beta[0] = is.intercept;
  beta[M + 1] = is.shift;
  return beta;
}

}  // namespace detail

// Draws a full cohort from the generative model. The marginal disease
// probability is matched to `prevalence` by solving a scalar offset on the D
// linear predictor by bisection; the offset is reported in the result rather
// than folded into beta_d, since the fitted model has no D intercept.
inline SynthResult generate_cohort(const SynthConfig& cfg) {
  cfg.validate();
  const ModelShape& s = cfg.shape;
  Rng rng(cfg.seed);

  SynthResult res;
  res.data.shape = s;
  res.data.patients.resize(cfg.n);

  // Covariates and eta first; the prevalence offset depends on them.
  for (auto& rec : res.data.patients) {
    rec.x.resize(s.M);
    for (std::size_t m = 0; m < s.M; ++m) {
      const CovariateSpec& cs = cfg.covariates[m];
      rec.x[m] = cs.kind == CovariateSpec::Kind::normal
                     ? rng.normal()
                     : (rng.bernoulli(cs.q) ? 1.0 : 0.0);
    }
  }
  ParamSet& truth = res.truth;
  truth.beta_d = cfg.beta_d;
  truth.eta.resize(cfg.n);
  for (auto& e : truth.eta) e = rng.uniform(cfg.eta_a, cfg.eta_b);

  std::vector<double> base_lp(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    double lp = truth.eta[i];
    for (std::size_t m = 0; m < s.M; ++m) lp += res.data.patients[i].x[m] * cfg.beta_d[m];
    base_lp[i] = lp;
  }
  const auto mean_prob = [&](double c) {
    double acc = 0.0;
    for (double lp : base_lp) acc += expit(lp + c);
    return acc / static_cast<double>(cfg.n);
  };
  double lo = -40.0, hi = 40.0;
  if (mean_prob(lo) > cfg.prevalence || mean_prob(hi) < cfg.prevalence)
    throw config_error("synth: prevalence target infeasible");
  for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_prob(mid) < cfg.prevalence ? lo : hi) = mid;
  }
  res.d_offset = 0.5 * (lo + hi);
  if (std::abs(mean_prob(res.d_offset) - cfg.prevalence) > 1e-4)
    throw config_error("synth: prevalence bisection did not converge");

  // Channel coefficients.
  for (std::size_t j = 0; j < s.J; ++j) {
    const BiomarkerSpec& b = cfg.biomarkers[j];
    if (!b.beta_r.empty()) {
      if (b.beta_r.size() != s.M + 2) throw config_error("synth: beta_r length != M+2");
      truth.beta_r.push_back(b.beta_r);
    } else {
      const InterceptShift is = beta_from_sens_spec(
          detail::clamp_prob(b.avail_sens, cfg.clamp_eps),
          detail::clamp_prob(b.avail_spec, cfg.clamp_eps));
      std::vector<double> beta(s.M + 2, 0.0);
      beta[0] = is.intercept;
      beta[s.M + 1] = is.shift;
      truth.beta_r.push_back(std::move(beta));
    }
    if (!b.beta_y.empty()) {
      if (b.beta_y.size() != s.M + 2) throw config_error("synth: beta_y length != M+2");
      truth.beta_y.push_back(b.beta_y);
    } else {
      std::vector<double> beta(s.M + 2, 0.0);
      beta[0] = b.mean;
      beta[s.M + 1] = b.shift;
      truth.beta_y.push_back(std::move(beta));
    }
    truth.tau2.push_back(b.sd * b.sd);
  }
  for (std::size_t k = 0; k < s.K; ++k)
    truth.beta_w.push_back(detail::channel_beta(cfg.codes[k], s.M, cfg.clamp_eps));
  for (std::size_t l = 0; l < s.L; ++l)
    truth.beta_p.push_back(detail::channel_beta(cfg.medications[l], s.M, cfg.clamp_eps));

  // Outcome draws.
  res.d_true.resize(cfg.n);
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    PatientRecord& rec = res.data.patients[i];
    const int d = rng.bernoulli(expit(base_lp[i] + res.d_offset)) ? 1 : 0;
    res.d_true[i] = static_cast<std::uint8_t>(d);
    n_pos += static_cast<std::size_t>(d);
    rec.r.resize(s.J);
    rec.y.assign(s.J, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t j = 0; j < s.J; ++j) {
      rec.r[j] = rng.bernoulli(expit(linear_predictor(rec.x, d, truth.beta_r[j]))) ? 1 : 0;
      if (rec.r[j])
        rec.y[j] = rng.normal(linear_predictor(rec.x, d, truth.beta_y[j]),
                              std::sqrt(truth.tau2[j]));
    }
    rec.w.resize(s.K);
    for (std::size_t k = 0; k < s.K; ++k)
      rec.w[k] = rng.bernoulli(expit(linear_predictor(rec.x, d, truth.beta_w[k]))) ? 1 : 0;
    rec.p.resize(s.L);
    for (std::size_t l = 0; l < s.L; ++l)
      rec.p[l] = rng.bernoulli(expit(linear_predictor(rec.x, d, truth.beta_p[l]))) ? 1 : 0;
  }
  res.prevalence_empirical = static_cast<double>(n_pos) / static_cast<double>(cfg.n);
  return res;
}

// Empirical sensitivity/specificity of each binary channel against the true
// labels, for target-vs-empirical reporting.
struct ChannelEmpirical {
  std::string label;
  double target_sens, target_spec;
  double emp_sens, emp_spec;
};

inline std::vector<ChannelEmpirical> empirical_channels(const SynthConfig& cfg,
                                                        const SynthResult& res) {
  std::vector<ChannelEmpirical> out;
  const std::size_t n = res.data.n();
  auto rate = [&](auto&& get, int d_val) {
    std::size_t hits = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (res.d_true[i] != d_val) continue;
      ++total;
      hits += get(res.data.patients[i]) ? 1u : 0u;
    }
    return total ? static_cast<double>(hits) / static_cast<double>(total)
                 : std::numeric_limits<double>::quiet_NaN();
  };
  const double eps = cfg.clamp_eps;
  for (std::size_t k = 0; k < cfg.shape.K; ++k) {
    const auto& c = cfg.codes[k];
    out.push_back({c.name.empty() ? "code " + std::to_string(k + 1) : c.name,
                   detail::clamp_prob(c.sens, eps), detail::clamp_prob(c.spec, eps),
                   rate([k](const PatientRecord& r) { return r.w[k] != 0; }, 1),
                   1.0 - rate([k](const PatientRecord& r) { return r.w[k] != 0; }, 0)});
  }
  for (std::size_t l = 0; l < cfg.shape.L; ++l) {
    const auto& c = cfg.medications[l];
    out.push_back({c.name.empty() ? "medication " + std::to_string(l + 1) : c.name,
                   detail::clamp_prob(c.sens, eps), detail::clamp_prob(c.spec, eps),
                   rate([l](const PatientRecord& r) { return r.p[l] != 0; }, 1),
                   1.0 - rate([l](const PatientRecord& r) { return r.p[l] != 0; }, 0)});
  }
  for (std::size_t j = 0; j < cfg.shape.J; ++j) {
    const auto& b = cfg.biomarkers[j];
    std::string label = b.name.empty() ? "biomarker " + std::to_string(j + 1) : b.name;
    out.push_back({label + " availability", detail::clamp_prob(b.avail_sens, eps),
                   detail::clamp_prob(b.avail_spec, eps),
                   rate([j](const PatientRecord& r) { return r.r[j] != 0; }, 1),
                   1.0 - rate([j](const PatientRecord& r) { return r.r[j] != 0; }, 0)});
  }
  return out;
}

// ---- JSON bindings ----

inline SynthConfig synth_config_from_json(const json& j) {
  SynthConfig cfg;
  cfg.shape = shape_from_json(j);
  cfg.n = j.value("n", 1000u);
  cfg.prevalence = j.value("prevalence", 0.05);
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.clamp_eps = j.value("clamp_eps", 1e-4);
  if (j.contains("eta_bounds")) {
    const auto b = j.at("eta_bounds").get<std::vector<double>>();
    if (b.size() != 2) throw config_error("synth: eta_bounds expects [a, b]");
    cfg.eta_a = b[0];
    cfg.eta_b = b[1];
  }
  if (j.contains("covariates")) {
    for (const auto& c : j.at("covariates")) {
      CovariateSpec cs;
      const std::string kind = c.value("kind", "normal");
      if (kind == "normal") {
        cs.kind = CovariateSpec::Kind::normal;
      } else if (kind == "bernoulli") {
        cs.kind = CovariateSpec::Kind::bernoulli;
        cs.q = c.value("q", 0.5);
      } else {
        throw config_error("synth: unknown covariate kind '" + kind + "'");
      }
      cfg.covariates.push_back(cs);
    }
  }
  cfg.beta_d = j.value("beta_d", std::vector<double>(cfg.shape.M, 0.0));
  if (j.contains("biomarkers")) {
    for (const auto& b : j.at("biomarkers")) {
      BiomarkerSpec bs;
      bs.avail_sens = b.value("avail_sens", 0.9);
      bs.avail_spec = b.value("avail_spec", 0.5);
      bs.mean = b.value("mean", 0.0);
      bs.shift = b.value("shift", 1.0);
      bs.sd = b.value("sd", 1.0);
      bs.beta_r = b.value("beta_r", std::vector<double>{});
      bs.beta_y = b.value("beta_y", std::vector<double>{});
      bs.name = b.value("name", std::string{});
      cfg.biomarkers.push_back(std::move(bs));
    }
  }
  auto parse_binary_list = [&](const char* key, std::vector<BinaryChannelSpec>& out) {
    if (!j.contains(key)) return;
    for (const auto& c : j.at(key)) {
      BinaryChannelSpec bc;
      bc.sens = c.value("sens", 0.5);
      bc.spec = c.value("spec", 0.5);
      bc.beta = c.value("beta", std::vector<double>{});
      bc.name = c.value("name", std::string{});
      out.push_back(std::move(bc));
    }
  };
  parse_binary_list("codes", cfg.codes);
  parse_binary_list("medications", cfg.medications);
  cfg.validate();
  return cfg;
}

// Defaults mirror the published pediatric T2DM comparison: code/medication
// sensitivities 0.15/0.18/0.40/0.55, perfect specificities pulled to 0.9996,
// biomarker shifts 89.30 (glucose) and 4.80 (HbA1c) in original units.
inline json default_synth_config_json(std::size_t n = 5000, std::uint64_t seed = 1) {
  return json{
      {"shape", {{"M", 2}, {"J", 2}, {"K", 2}, {"L", 2}}},
      {"n", n},
      {"seed", seed},
      {"prevalence", 0.05},
      {"eta_bounds", {-3.0, 3.0}},
      {"covariates",
       {{{"kind", "normal"}}, {{"kind", "bernoulli"}, {"q", 0.5}}}},
      {"beta_d", {0.4, -0.4}},
      {"biomarkers",
       {{{"name", "Glucose"}, {"avail_sens", 0.95}, {"avail_spec", 0.15},
         {"mean", 95.0}, {"shift", 89.30}, {"sd", 15.0}},
        {{"name", "HbA1c"}, {"avail_sens", 0.95}, {"avail_spec", 0.15},
         {"mean", 5.4}, {"shift", 4.80}, {"sd", 0.6}}}},
      {"codes",
       {{{"name", "T2DM code"}, {"sens", 0.15}, {"spec", 0.9996}},
        {{"name", "Endocrinologist visit code"}, {"sens", 0.18}, {"spec", 0.99}}}},
      {"medications",
       {{{"name", "Metformin code"}, {"sens", 0.40}, {"spec", 0.98}},
        {{"name", "Insulin code"}, {"sens", 0.55}, {"spec", 0.9996}}}}};
}

inline SynthConfig default_synth_config(std::size_t n = 5000, std::uint64_t seed = 1) {
  return synth_config_from_json(default_synth_config_json(n, seed));
}

inline json param_set_to_json(const ParamSet& p) {
  return json{{"beta_d", p.beta_d},   {"beta_r", p.beta_r}, {"beta_y", p.beta_y},
              {"tau2", p.tau2},       {"beta_w", p.beta_w}, {"beta_p", p.beta_p},
              {"eta", p.eta}};
}

inline ParamSet param_set_from_json(const json& j) {
  ParamSet p;
  p.beta_d = j.at("beta_d").get<std::vector<double>>();
  p.beta_r = j.at("beta_r").get<std::vector<std::vector<double>>>();
  p.beta_y = j.at("beta_y").get<std::vector<std::vector<double>>>();
  p.tau2 = j.at("tau2").get<std::vector<double>>();
  p.beta_w = j.at("beta_w").get<std::vector<std::vector<double>>>();
  p.beta_p = j.at("beta_p").get<std::vector<std::vector<double>>>();
  p.eta = j.at("eta").get<std::vector<double>>();
  return p;
}

inline json truth_sidecar_json(const SynthConfig& cfg, const SynthResult& res) {
  json j;
  j["shape"] = shape_to_json(cfg.shape);
  j["seed"] = cfg.seed;
  j["prevalence_target"] = cfg.prevalence;
  j["prevalence_empirical"] = res.prevalence_empirical;
  j["d_offset"] = res.d_offset;
  j["params"] = param_set_to_json(res.truth);
  json names;
  const ChannelNames cn = cfg.names();
  names["biomarkers"] = cn.biomarkers;
  names["codes"] = cn.codes;
  names["medications"] = cn.medications;
  j["names"] = names;
  return j;
}

}  // namespace phenlca

#endif
