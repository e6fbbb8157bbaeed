#ifndef PHENLCA_GIBBS_HPP
#define PHENLCA_GIBBS_HPP

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "phenlca/errors.hpp"
#include "phenlca/math.hpp"
#include "phenlca/model.hpp"
#include "phenlca/rng.hpp"
#include "phenlca/transforms.hpp"
#include "phenlca/types.hpp"

namespace phenlca {

enum class GibbsInit {
  empirical,  // moment-matched intercepts from observed channel rates
  prior,      // coefficient blocks at their prior means
};

struct GibbsOptions {
  std::size_t chains = 3;
  std::size_t iters = 4000;       // total sweeps per chain
  std::size_t warmup = 1000;      // adaptation window, discarded
  std::size_t thin = 1;
  std::uint64_t seed = 0;
  double init_step_beta = 0.25;   // random-walk scale per coefficient block
  double init_step_eta = 1.0;     // on the unconstrained eta scale
  double adapt_target = 0.30;
  double jitter = 0.5;            // initial dispersion, unconstrained scale
  GibbsInit init = GibbsInit::empirical;
  std::shared_ptr<const ParamSet> init_params;  // explicit start, overrides init
  int anchor_biomarker = 0;       // 0-based biomarker index; -1 disables
  std::size_t threads = 0;        // 0 = one per chain, capped by hardware
  bool store_eta = true;
  bool record_logjoint = true;

  void validate() const {
    if (chains < 1) throw config_error("gibbs: chains must be >= 1");
    if (iters < 1) throw config_error("gibbs: iters must be >= 1");
    if (warmup >= iters) throw config_error("gibbs: warmup must be < iters");
    if (thin < 1) throw config_error("gibbs: thin must be >= 1");
    if (!(adapt_target > 0.0 && adapt_target < 1.0))
      throw config_error("gibbs: adapt_target must be in (0,1)");
  }

  std::size_t kept_per_chain() const { return (iters - warmup + thin - 1) / thin; }
};

struct ChainResult {
  std::vector<double> draws;        // kept x n_cols, row major, constrained
  std::vector<double> logjoint;     // marginalized log joint per kept draw
  std::vector<double> accept_rate;  // per block, post warmup; eta rate last
  std::vector<double> step_size;    // final (frozen) step per block + eta
  std::vector<double> step_size_at_warmup_end;  // must equal step_size
  std::size_t kept = 0;
  double wall_seconds = 0.0;
};

// D_i drawn exactly from its full conditional.
inline int step_d(const PatientRecord& rec, const ParamSet& params, std::size_t i,
                  Rng& rng) {
  return rng.bernoulli(class_posterior(rec, params, i)) ? 1 : 0;
}

struct InvGammaParams {
  double shape, rate;
};

// Conjugate full conditional of one biomarker variance given the Normal
// terms: InvGamma(c + n/2, d + SSR/2).
inline InvGammaParams tau_full_conditional(double prior_shape, double prior_rate,
                                           std::size_t n_obs, double ssr) {
  return {prior_shape + 0.5 * static_cast<double>(n_obs), prior_rate + 0.5 * ssr};
}

inline double step_tau(double prior_shape, double prior_rate, std::size_t n_obs,
                       double ssr, Rng& rng) {
  const InvGammaParams post = tau_full_conditional(prior_shape, prior_rate, n_obs, ssr);
  return rng.inv_gamma(post.shape, post.rate);
}

struct GibbsFit {
  ModelShape shape;
  std::size_t n_patients = 0;
  std::vector<std::string> column_names;  // matches draw columns
  std::vector<std::string> block_names;   // matches accept_rate/step_size
  std::vector<ChainResult> chains;
  GibbsOptions options;
  std::vector<BiomarkerScale> y_scale;
  double wall_seconds = 0.0;

  std::size_t n_cols() const { return column_names.size(); }
};

namespace gibbs_detail {

// One coefficient block of the Metropolis-within-Gibbs sweep.
struct Block {
  enum class Kind { d, r, y, w, p } kind;
  std::size_t index;  // j, k or l; unused for d
  std::string name;
};

inline std::vector<Block> block_list(const ModelShape& s) {
  std::vector<Block> out;
  if (s.M > 0) out.push_back({Block::Kind::d, 0, "beta_d"});
  for (std::size_t j = 0; j < s.J; ++j)
    out.push_back({Block::Kind::r, j, "beta_r[" + std::to_string(j + 1) + "]"});
  for (std::size_t j = 0; j < s.J; ++j)
    out.push_back({Block::Kind::y, j, "beta_y[" + std::to_string(j + 1) + "]"});
  for (std::size_t k = 0; k < s.K; ++k)
    out.push_back({Block::Kind::w, k, "beta_w[" + std::to_string(k + 1) + "]"});
  for (std::size_t l = 0; l < s.L; ++l)
    out.push_back({Block::Kind::p, l, "beta_p[" + std::to_string(l + 1) + "]"});
  return out;
}

// Chain-local state with cached per-block conditional log likelihoods. The
// caches let a block proposal touch only its own channel.
class ChainState {
 public:
  ChainState(const Dataset& data, const PriorSpec& priors, const GibbsOptions& opt,
             std::size_t chain_index)
      : data_(data),
        priors_(priors),
        opt_(opt),
        shape_(data.shape),
        n_(data.n()),
        layout_{data.shape, data.n()},
        blocks_(block_list(data.shape)),
        rng_(opt.seed, chain_index) {
    init();
  }

  const ParamSet& params() const { return params_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<double>& step_sizes() const { return steps_; }
  double step_eta() const { return step_eta_; }

  void init() {
    params_.beta_d = priors_.d.mean;
    params_.beta_r.assign(shape_.J, priors_.r.mean);
    params_.beta_y.assign(shape_.J, priors_.y.mean);
    params_.tau2.assign(shape_.J, 1.0);
    params_.beta_w.assign(shape_.K, priors_.w.mean);
    params_.beta_p.assign(shape_.L, priors_.p.mean);
    u_.assign(n_, 0.0);

    if (opt_.init_params) {
      params_ = *opt_.init_params;
      params_.validate(shape_, n_);
      for (std::size_t i = 0; i < n_; ++i)
        u_[i] = eta_to_unconstrained(params_.eta[i], priors_.eta_a, priors_.eta_b);
    } else if (opt_.init == GibbsInit::empirical) {
      empirical_init();
    }

    if (opt_.jitter > 0.0) {
      auto jit = [&](std::vector<double>& v) {
        for (auto& x : v) x += rng_.normal(0.0, opt_.jitter);
      };
      jit(params_.beta_d);
      for (auto& b : params_.beta_r) jit(b);
      for (auto& b : params_.beta_y) jit(b);
      for (auto& b : params_.beta_w) jit(b);
      for (auto& b : params_.beta_p) jit(b);
      for (auto& t : params_.tau2) t *= std::exp(rng_.normal(0.0, opt_.jitter));
      jit(u_);
    }
    params_.eta.resize(n_);
    for (std::size_t i = 0; i < n_; ++i)
      params_.eta[i] = eta_from_unconstrained(u_[i], priors_.eta_a, priors_.eta_b);

    // D from the class posterior at the initial parameters
    d_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i)
      d_[i] = rng_.bernoulli(class_posterior(data_.patients[i], params_, i)) ? 1 : 0;

    steps_.assign(blocks_.size(), opt_.init_step_beta);
    step_eta_ = opt_.init_step_eta;
    accept_count_.assign(blocks_.size(), 0);
    propose_count_.assign(blocks_.size(), 0);
    eta_accept_ = eta_propose_ = 0;

    recompute_caches();
    const double lj = complete_logjoint();
    if (!std::isfinite(lj))
      throw numeric_error(
          "gibbs: initial state has non-finite log joint; try a different seed or "
          "smaller --jitter");
  }

  // Conditional channel log likelihood sums at the current (d, params).
  void recompute_caches() {
    chan_r_.assign(shape_.J, 0.0);
    chan_y_.assign(shape_.J, 0.0);
    chan_w_.assign(shape_.K, 0.0);
    chan_p_.assign(shape_.L, 0.0);
    dmodel_ = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const PatientRecord& rec = data_.patients[i];
      const int di = d_[i];
      dmodel_ += bernoulli_logit_lpmf(di != 0, d_alpha(i));
      for (std::size_t j = 0; j < shape_.J; ++j) {
        chan_r_[j] += bernoulli_logit_lpmf(rec.r[j] != 0,
                                           linear_predictor(rec.x, di, params_.beta_r[j]));
        if (rec.r[j])
          chan_y_[j] += normal_lpdf(rec.y[j], linear_predictor(rec.x, di, params_.beta_y[j]),
                                    params_.tau2[j]);
      }
      for (std::size_t k = 0; k < shape_.K; ++k)
        chan_w_[k] += bernoulli_logit_lpmf(rec.w[k] != 0,
                                           linear_predictor(rec.x, di, params_.beta_w[k]));
      for (std::size_t l = 0; l < shape_.L; ++l)
        chan_p_[l] += bernoulli_logit_lpmf(rec.p[l] != 0,
                                           linear_predictor(rec.x, di, params_.beta_p[l]));
    }
  }

  double complete_logjoint() const {
    double ll = dmodel_;
    for (double v : chan_r_) ll += v;
    for (double v : chan_y_) ll += v;
    for (double v : chan_w_) ll += v;
    for (double v : chan_p_) ll += v;
    return ll + log_prior(params_, priors_, shape_);
  }

  // Samples every D_i from its exact full conditional and rebuilds the
  // channel caches in the same pass.
  void sweep_d() {
    std::fill(chan_r_.begin(), chan_r_.end(), 0.0);
    std::fill(chan_y_.begin(), chan_y_.end(), 0.0);
    std::fill(chan_w_.begin(), chan_w_.end(), 0.0);
    std::fill(chan_p_.begin(), chan_p_.end(), 0.0);
    dmodel_ = 0.0;
    const std::size_t M = shape_.M;
    for (std::size_t i = 0; i < n_; ++i) {
      const PatientRecord& rec = data_.patients[i];
      const double alpha = d_alpha(i);
      double delta = alpha;
      scratch_.clear();
      auto channel = [&](bool obs, const std::vector<double>& beta) {
        const double lp0 = linear_predictor(rec.x, 0, beta);
        const double t0 = bernoulli_logit_lpmf(obs, lp0);
        const double t1 = bernoulli_logit_lpmf(obs, lp0 + beta[M + 1]);
        scratch_.push_back(t0);
        scratch_.push_back(t1);
        delta += t1 - t0;
      };
      for (std::size_t j = 0; j < shape_.J; ++j) {
        channel(rec.r[j] != 0, params_.beta_r[j]);
        if (rec.r[j]) {
          const double m0 = linear_predictor(rec.x, 0, params_.beta_y[j]);
          const double t0 = normal_lpdf(rec.y[j], m0, params_.tau2[j]);
          const double t1 =
              normal_lpdf(rec.y[j], m0 + params_.beta_y[j][M + 1], params_.tau2[j]);
          scratch_.push_back(t0);
          scratch_.push_back(t1);
          delta += t1 - t0;
        } else {
          scratch_.push_back(0.0);
          scratch_.push_back(0.0);
        }
      }
      for (std::size_t k = 0; k < shape_.K; ++k) channel(rec.w[k] != 0, params_.beta_w[k]);
      for (std::size_t l = 0; l < shape_.L; ++l) channel(rec.p[l] != 0, params_.beta_p[l]);

      const int di = rng_.bernoulli(expit(delta)) ? 1 : 0;
      d_[i] = static_cast<std::uint8_t>(di);
      dmodel_ += bernoulli_logit_lpmf(di != 0, alpha);
      std::size_t at = 0;
      for (std::size_t j = 0; j < shape_.J; ++j) {
        chan_r_[j] += scratch_[2 * at + di];
        ++at;
        chan_y_[j] += scratch_[2 * at + di];
        ++at;
      }
      for (std::size_t k = 0; k < shape_.K; ++k) {
        chan_w_[k] += scratch_[2 * at + di];
        ++at;
      }
      for (std::size_t l = 0; l < shape_.L; ++l) {
        chan_p_[l] += scratch_[2 * at + di];
        ++at;
      }
    }
  }

  // Random-walk Metropolis on the unconstrained eta coordinate; the target
  // is the patient's D-model term plus the flat-prior Jacobian.
  void sweep_eta(bool adapt, std::size_t adapt_t) {
    dmodel_ = 0.0;
    std::size_t accepted = 0;
    const double a = priors_.eta_a, b = priors_.eta_b;
    for (std::size_t i = 0; i < n_; ++i) {
      const double xb = d_xb(i);
      const bool di = d_[i] != 0;
      const double cur = bernoulli_logit_lpmf(di, xb + params_.eta[i]) +
                         eta_log_jacobian(u_[i], a, b);
      const double u_prop = u_[i] + step_eta_ * rng_.normal();
      const double eta_prop = eta_from_unconstrained(u_prop, a, b);
      const double prop =
          bernoulli_logit_lpmf(di, xb + eta_prop) + eta_log_jacobian(u_prop, a, b);
      if (std::isfinite(prop) && std::log(rng_.u01_pos()) < prop - cur) {
        u_[i] = u_prop;
        params_.eta[i] = eta_prop;
        ++accepted;
      }
      dmodel_ += bernoulli_logit_lpmf(di, xb + params_.eta[i]);
    }
    eta_propose_ += n_;
    eta_accept_ += accepted;
    if (adapt && step_eta_ > 0.0) {
      const double rate = static_cast<double>(accepted) / static_cast<double>(n_);
      step_eta_ = adapt_step(step_eta_, rate, adapt_t);
    }
  }

  // Metropolis proposal on one coefficient vector. Only the block's own
  // channel log likelihood is recomputed.
  bool step_block(std::size_t b, bool adapt, std::size_t adapt_t) {
    const Block& blk = blocks_[b];
    const double step = steps_[b];
    std::vector<double>& cur = current_vector(blk);
    prop_.assign(cur.begin(), cur.end());
    for (auto& v : prop_) v += step * rng_.normal();

    const GaussianPrior& prior = block_prior(blk);
    const double prior_cur = mvn_lpdf(cur, prior.mean, prior.chol);
    const double prior_prop = mvn_lpdf(prop_, prior.mean, prior.chol);
    const double ll_cur = block_loglik_cached(blk);
    const double ll_prop = block_loglik(blk, prop_);

    ++propose_count_[b];
    bool accepted = false;
    const double delta = (ll_prop + prior_prop) - (ll_cur + prior_cur);
    if (std::isfinite(delta) && (delta >= 0.0 || std::log(rng_.u01_pos()) < delta)) {
      cur.swap(prop_);
      set_block_loglik(blk, ll_prop);
      accepted = true;
      ++accept_count_[b];
    }
    if (adapt && step > 0.0)
      steps_[b] = adapt_step(steps_[b], accepted ? 1.0 : 0.0, adapt_t);
    return accepted;
  }

  // Conjugate inverse-gamma draw for each biomarker variance.
  void sweep_tau() {
    for (std::size_t j = 0; j < shape_.J; ++j) {
      std::size_t nj = 0;
      double ssr = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        const PatientRecord& rec = data_.patients[i];
        if (!rec.r[j]) continue;
        ++nj;
        const double resid =
            rec.y[j] - linear_predictor(rec.x, d_[i], params_.beta_y[j]);
        ssr += resid * resid;
      }
      const InvGammaParams post =
          tau_full_conditional(priors_.tau_shape, priors_.tau_rate, nj, ssr);
      const double t2 = rng_.inv_gamma(post.shape, post.rate);
      params_.tau2[j] = t2;
      chan_y_[j] = -0.5 * static_cast<double>(nj) * (log_two_pi + std::log(t2)) -
                   ssr / (2.0 * t2);
    }
  }

  // Relabels the classes when the anchor biomarker shift goes negative.
  // Valid fold only with symmetric eta bounds; otherwise disabled upstream.
  bool reflect_anchor() {
    const int anchor = opt_.anchor_biomarker;
    if (anchor < 0 || static_cast<std::size_t>(anchor) >= shape_.J) return false;
    if (priors_.eta_a != -priors_.eta_b) return false;
    if (params_.beta_y[static_cast<std::size_t>(anchor)][shape_.M + 1] >= 0.0) return false;
    auto fold = [&](std::vector<double>& beta) {
      beta[0] += beta[shape_.M + 1];
      beta[shape_.M + 1] = -beta[shape_.M + 1];
    };
    for (auto& b : params_.beta_r) fold(b);
    for (auto& b : params_.beta_y) fold(b);
    for (auto& b : params_.beta_w) fold(b);
    for (auto& b : params_.beta_p) fold(b);
    for (auto& v : params_.beta_d) v = -v;
    for (std::size_t i = 0; i < n_; ++i) {
      params_.eta[i] = -params_.eta[i];
      u_[i] = -u_[i];
      d_[i] = d_[i] ? 0 : 1;
    }
    recompute_caches();
    return true;
  }

  void one_sweep(bool adapt, std::size_t adapt_t) {
    sweep_d();
    sweep_eta(adapt, adapt_t);
    for (std::size_t b = 0; b < blocks_.size(); ++b) step_block(b, adapt, adapt_t);
    sweep_tau();
    reflect_anchor();
  }

  void reset_accept_stats() {
    std::fill(accept_count_.begin(), accept_count_.end(), 0);
    std::fill(propose_count_.begin(), propose_count_.end(), 0);
    eta_accept_ = eta_propose_ = 0;
  }

  std::vector<double> acceptance_rates() const {
    std::vector<double> out;
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      out.push_back(propose_count_[b] ? static_cast<double>(accept_count_[b]) /
                                            static_cast<double>(propose_count_[b])
                                      : 0.0);
    out.push_back(eta_propose_ ? static_cast<double>(eta_accept_) /
                                     static_cast<double>(eta_propose_)
                               : 0.0);
    return out;
  }

  double marginal_logjoint() const {
    double ll = log_prior(params_, priors_, shape_);
    for (std::size_t i = 0; i < n_; ++i)
      ll += log_marginal_patient(data_.patients[i], params_, i);
    return ll;
  }

  void append_draw(std::vector<double>& out, bool with_eta) const {
    const auto put = [&](const std::vector<double>& v) {
      out.insert(out.end(), v.begin(), v.end());
    };
    put(params_.beta_d);
    for (const auto& b : params_.beta_r) put(b);
    for (const auto& b : params_.beta_y) put(b);
    put(params_.tau2);
    for (const auto& b : params_.beta_w) put(b);
    for (const auto& b : params_.beta_p) put(b);
    if (with_eta) put(params_.eta);
  }

 private:
  // Moment-matched warm start: a short classification-EM pass over the
  // marginal two-class mixture with covariate coefficients held at zero.
  // Prior-mean starts put every binary channel at sens = spec = 0.5, which
  // seeds the latent class from noise and can trap the chain in a polluted
  // labeling; anchoring the start on elevated biomarkers avoids that.
  void empirical_init() {
    const double floor_p = 1e-3;
    auto clamp01 = [&](double p) { return std::min(1.0 - floor_p, std::max(floor_p, p)); };

    // observed biomarker moments for the elevation score
    std::vector<double> ym(shape_.J, 0.0), ys(shape_.J, 1.0);
    for (std::size_t j = 0; j < shape_.J; ++j) {
      double s = 0.0, s2 = 0.0;
      std::size_t c = 0;
      for (const auto& rec : data_.patients)
        if (rec.r[j]) {
          s += rec.y[j];
          s2 += rec.y[j] * rec.y[j];
          ++c;
        }
      if (c < 2) continue;
      ym[j] = s / static_cast<double>(c);
      const double var = s2 / static_cast<double>(c) - ym[j] * ym[j];
      if (var > 0.0) ys[j] = std::sqrt(var);
    }

    std::vector<double> resp(n_, -1.0);
    double seeded_sum = 0.0;
    std::size_t seeded = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const PatientRecord& rec = data_.patients[i];
      double z = neg_inf;
      for (std::size_t j = 0; j < shape_.J; ++j)
        if (rec.r[j]) z = std::max(z, (rec.y[j] - ym[j]) / ys[j]);
      if (z != neg_inf) {
        resp[i] = expit(z - 2.0);
      } else if (shape_.J == 0) {
        double hits = 0.0;
        for (auto v : rec.w) hits += v;
        for (auto v : rec.p) hits += v;
        resp[i] = expit(hits - 1.5);
      }
      if (resp[i] >= 0.0) {
        seeded_sum += resp[i];
        ++seeded;
      }
    }
    const double fill = seeded ? seeded_sum / static_cast<double>(seeded) : 0.1;
    for (auto& r : resp)
      if (r < 0.0) r = fill;

    // moment parameters: per binary channel (rate within each class), per
    // biomarker (class means and pooled variance)
    std::vector<double> rate1_r(shape_.J), rate0_r(shape_.J);
    std::vector<double> rate1_w(shape_.K), rate0_w(shape_.K);
    std::vector<double> rate1_p(shape_.L), rate0_p(shape_.L);
    std::vector<double> mu1(shape_.J, 1.0), mu0(shape_.J, 0.0), var_y(shape_.J, 1.0);
    double pi = 0.1;

    for (int em = 0; em < 50; ++em) {
      // M step from current responsibilities
      double rs = 0.0;
      for (double r : resp) rs += r;
      pi = clamp01(rs / static_cast<double>(n_));
      auto rates = [&](auto&& get, double& rate1, double& rate0) {
        double s1 = 0.0, s0 = 0.0, n1 = 0.0, n0 = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
          const double v = get(data_.patients[i]) ? 1.0 : 0.0;
          s1 += resp[i] * v;
          n1 += resp[i];
          s0 += (1.0 - resp[i]) * v;
          n0 += 1.0 - resp[i];
        }
        rate1 = clamp01(n1 > 0.0 ? s1 / n1 : 0.5);
        rate0 = clamp01(n0 > 0.0 ? s0 / n0 : 0.5);
      };
      for (std::size_t j = 0; j < shape_.J; ++j)
        rates([j](const PatientRecord& r) { return r.r[j] != 0; }, rate1_r[j], rate0_r[j]);
      for (std::size_t k = 0; k < shape_.K; ++k)
        rates([k](const PatientRecord& r) { return r.w[k] != 0; }, rate1_w[k], rate0_w[k]);
      for (std::size_t l = 0; l < shape_.L; ++l)
        rates([l](const PatientRecord& r) { return r.p[l] != 0; }, rate1_p[l], rate0_p[l]);
      for (std::size_t j = 0; j < shape_.J; ++j) {
        double s1 = 0.0, s0 = 0.0, n1 = 0.0, n0 = 0.0, ss = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
          const PatientRecord& rec = data_.patients[i];
          if (!rec.r[j]) continue;
          s1 += resp[i] * rec.y[j];
          n1 += resp[i];
          s0 += (1.0 - resp[i]) * rec.y[j];
          n0 += 1.0 - resp[i];
          nn += 1.0;
        }
        if (n1 > 1e-8) mu1[j] = s1 / n1;
        if (n0 > 1e-8) mu0[j] = s0 / n0;
        for (std::size_t i = 0; i < n_; ++i) {
          const PatientRecord& rec = data_.patients[i];
          if (!rec.r[j]) continue;
          const double m = resp[i] * mu1[j] + (1.0 - resp[i]) * mu0[j];
          const double d1 = rec.y[j] - mu1[j], d0 = rec.y[j] - mu0[j];
          (void)m;
          ss += resp[i] * d1 * d1 + (1.0 - resp[i]) * d0 * d0;
        }
        if (nn > 1.0) var_y[j] = std::max(1e-6, ss / nn);
      }

      // E step
      const double lp1 = std::log(pi), lp0 = std::log1p(-pi);
      for (std::size_t i = 0; i < n_; ++i) {
        const PatientRecord& rec = data_.patients[i];
        double a = lp1 - lp0;
        auto add = [&](bool v, double r1, double r0) {
          a += v ? std::log(r1 / r0) : std::log((1.0 - r1) / (1.0 - r0));
        };
        for (std::size_t j = 0; j < shape_.J; ++j) {
          add(rec.r[j] != 0, rate1_r[j], rate0_r[j]);
          if (rec.r[j]) {
            const double d1 = rec.y[j] - mu1[j], d0 = rec.y[j] - mu0[j];
            a += (d0 * d0 - d1 * d1) / (2.0 * var_y[j]);
          }
        }
        for (std::size_t k = 0; k < shape_.K; ++k)
          add(rec.w[k] != 0, rate1_w[k], rate0_w[k]);
        for (std::size_t l = 0; l < shape_.L; ++l)
          add(rec.p[l] != 0, rate1_p[l], rate0_p[l]);
        resp[i] = expit(a);
      }
    }

    // keep the anchor convention: class 1 owns the elevated anchor biomarker
    const int anchor = opt_.anchor_biomarker;
    if (anchor >= 0 && static_cast<std::size_t>(anchor) < shape_.J &&
        mu1[static_cast<std::size_t>(anchor)] < mu0[static_cast<std::size_t>(anchor)]) {
      pi = 1.0 - pi;
      std::swap(rate1_r, rate0_r);
      std::swap(rate1_w, rate0_w);
      std::swap(rate1_p, rate0_p);
      std::swap(mu1, mu0);
    }

    for (std::size_t j = 0; j < shape_.J; ++j) {
      params_.beta_r[j].assign(shape_.M + 2, 0.0);
      params_.beta_r[j][0] = logit(rate0_r[j]);
      params_.beta_r[j][shape_.M + 1] = logit(rate1_r[j]) - logit(rate0_r[j]);
      params_.beta_y[j].assign(shape_.M + 2, 0.0);
      params_.beta_y[j][0] = mu0[j];
      params_.beta_y[j][shape_.M + 1] = mu1[j] - mu0[j];
      params_.tau2[j] = var_y[j];
    }
    for (std::size_t k = 0; k < shape_.K; ++k) {
      params_.beta_w[k].assign(shape_.M + 2, 0.0);
      params_.beta_w[k][0] = logit(rate0_w[k]);
      params_.beta_w[k][shape_.M + 1] = logit(rate1_w[k]) - logit(rate0_w[k]);
    }
    for (std::size_t l = 0; l < shape_.L; ++l) {
      params_.beta_p[l].assign(shape_.M + 2, 0.0);
      params_.beta_p[l][0] = logit(rate0_p[l]);
      params_.beta_p[l][shape_.M + 1] = logit(rate1_p[l]) - logit(rate0_p[l]);
    }
    const double margin = 0.05 * (priors_.eta_b - priors_.eta_a);
    const double eta0 = std::min(priors_.eta_b - margin,
                                 std::max(priors_.eta_a + margin, logit(pi)));
    const double u0 = eta_to_unconstrained(eta0, priors_.eta_a, priors_.eta_b);
    u_.assign(n_, u0);
  }

  double d_xb(std::size_t i) const {
    double v = 0.0;
    for (std::size_t m = 0; m < shape_.M; ++m)
      v += data_.patients[i].x[m] * params_.beta_d[m];
    return v;
  }
  double d_alpha(std::size_t i) const { return d_xb(i) + params_.eta[i]; }

  std::vector<double>& current_vector(const Block& blk) {
    switch (blk.kind) {
      case Block::Kind::d:
        return params_.beta_d;
      case Block::Kind::r:
        return params_.beta_r[blk.index];
      case Block::Kind::y:
        return params_.beta_y[blk.index];
      case Block::Kind::w:
        return params_.beta_w[blk.index];
      case Block::Kind::p:
        return params_.beta_p[blk.index];
    }
    throw std::logic_error("unreachable");
  }

  const GaussianPrior& block_prior(const Block& blk) const {
    switch (blk.kind) {
      case Block::Kind::d:
        return priors_.d;
      case Block::Kind::r:
        return priors_.r;
      case Block::Kind::y:
        return priors_.y;
      case Block::Kind::w:
        return priors_.w;
      case Block::Kind::p:
        return priors_.p;
    }
    throw std::logic_error("unreachable");
  }

  double block_loglik_cached(const Block& blk) const {
    switch (blk.kind) {
      case Block::Kind::d:
        return dmodel_;
      case Block::Kind::r:
        return chan_r_[blk.index];
      case Block::Kind::y:
        return chan_y_[blk.index];
      case Block::Kind::w:
        return chan_w_[blk.index];
      case Block::Kind::p:
        return chan_p_[blk.index];
    }
    throw std::logic_error("unreachable");
  }

  void set_block_loglik(const Block& blk, double v) {
    switch (blk.kind) {
      case Block::Kind::d:
        dmodel_ = v;
        break;
      case Block::Kind::r:
        chan_r_[blk.index] = v;
        break;
      case Block::Kind::y:
        chan_y_[blk.index] = v;
        break;
      case Block::Kind::w:
        chan_w_[blk.index] = v;
        break;
      case Block::Kind::p:
        chan_p_[blk.index] = v;
        break;
    }
  }

  // Channel log likelihood under a proposed coefficient vector.
  double block_loglik(const Block& blk, const std::vector<double>& beta) const {
    double acc = 0.0;
    switch (blk.kind) {
      case Block::Kind::d:
        for (std::size_t i = 0; i < n_; ++i) {
          double xb = params_.eta[i];
          for (std::size_t m = 0; m < shape_.M; ++m)
            xb += data_.patients[i].x[m] * beta[m];
          acc += bernoulli_logit_lpmf(d_[i] != 0, xb);
        }
        return acc;
      case Block::Kind::r:
        for (std::size_t i = 0; i < n_; ++i)
          acc += bernoulli_logit_lpmf(
              data_.patients[i].r[blk.index] != 0,
              linear_predictor(data_.patients[i].x, d_[i], beta));
        return acc;
      case Block::Kind::y:
        for (std::size_t i = 0; i < n_; ++i) {
          const PatientRecord& rec = data_.patients[i];
          if (!rec.r[blk.index]) continue;
          acc += normal_lpdf(rec.y[blk.index], linear_predictor(rec.x, d_[i], beta),
                             params_.tau2[blk.index]);
        }
        return acc;
      case Block::Kind::w:
        for (std::size_t i = 0; i < n_; ++i)
          acc += bernoulli_logit_lpmf(
              data_.patients[i].w[blk.index] != 0,
              linear_predictor(data_.patients[i].x, d_[i], beta));
        return acc;
      case Block::Kind::p:
        for (std::size_t i = 0; i < n_; ++i)
          acc += bernoulli_logit_lpmf(
              data_.patients[i].p[blk.index] != 0,
              linear_predictor(data_.patients[i].x, d_[i], beta));
        return acc;
    }
    throw std::logic_error("unreachable");
  }

  // Robbins-Monro on the log step size, decaying so post-warmup freezing
  // leaves the exact target distribution intact.
  double adapt_step(double step, double rate, std::size_t t) const {
    const double gamma = 1.0 / std::sqrt(static_cast<double>(t) + 1.0);
    return step * std::exp(gamma * (rate - opt_.adapt_target));
  }

  const Dataset& data_;
  const PriorSpec& priors_;
  const GibbsOptions& opt_;
  ModelShape shape_;
  std::size_t n_;
  ParamLayout layout_;
  std::vector<Block> blocks_;
  Rng rng_;

  ParamSet params_;
  std::vector<std::uint8_t> d_;
  std::vector<double> u_;

  std::vector<double> chan_r_, chan_y_, chan_w_, chan_p_;
  double dmodel_ = 0.0;

  std::vector<double> steps_;
  double step_eta_ = 1.0;
  std::vector<std::size_t> accept_count_, propose_count_;
  std::size_t eta_accept_ = 0, eta_propose_ = 0;

  std::vector<double> scratch_, prop_;
};

inline ChainResult run_chain(const Dataset& data, const PriorSpec& priors,
                             const GibbsOptions& opt, std::size_t chain_index,
                             std::size_t n_cols) {
  const auto t0 = std::chrono::steady_clock::now();
  ChainState state(data, priors, opt, chain_index);

  ChainResult res;
  res.draws.reserve(opt.kept_per_chain() * n_cols);
  if (opt.warmup == 0) {
    res.step_size_at_warmup_end = state.step_sizes();
    res.step_size_at_warmup_end.push_back(state.step_eta());
  }

  for (std::size_t it = 1; it <= opt.iters; ++it) {
    const bool warm = it <= opt.warmup;
    state.one_sweep(warm, it);
    if (it == opt.warmup) {
      state.reset_accept_stats();
      res.step_size_at_warmup_end = state.step_sizes();
      res.step_size_at_warmup_end.push_back(state.step_eta());
    }
    if (!warm && (it - opt.warmup - 1) % opt.thin == 0) {
      state.append_draw(res.draws, opt.store_eta);
      res.logjoint.push_back(opt.record_logjoint ? state.marginal_logjoint() : 0.0);
      ++res.kept;
    }
  }
  res.accept_rate = state.acceptance_rates();
  res.step_size = state.step_sizes();
  res.step_size.push_back(state.step_eta());
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace gibbs_detail

inline std::size_t resolve_threads(std::size_t requested, std::size_t jobs) {
  if (requested == 0) {
    if (const char* env = std::getenv("PHENLCA_THREADS")) {
      const long v = std::atol(env);
      if (v > 0) requested = static_cast<std::size_t>(v);
    }
  }
  if (requested == 0) requested = std::thread::hardware_concurrency();
  if (requested == 0) requested = 1;
  return std::min(requested, jobs);
}

// Runs the full Metropolis-within-Gibbs fit. Chains are independent and may
// run concurrently; per-chain RNG streams are derived from (seed, chain), so
// results do not depend on scheduling.
inline GibbsFit gibbs_fit(const Dataset& data, const PriorSpec& priors,
                          const GibbsOptions& options) {
  options.validate();
  data.validate();
  priors.validate(data.shape);
  const auto t0 = std::chrono::steady_clock::now();

  GibbsFit fit;
  fit.shape = data.shape;
  fit.n_patients = data.n();
  fit.options = options;
  fit.y_scale = data.y_scale;
  const ParamLayout layout{data.shape, data.n()};
  auto all_names = layout.names();
  if (options.store_eta) {
    fit.column_names = std::move(all_names);
  } else {
    fit.column_names.assign(all_names.begin(),
                            all_names.begin() + static_cast<std::ptrdiff_t>(layout.n_global()));
  }
  for (const auto& b : gibbs_detail::block_list(data.shape)) fit.block_names.push_back(b.name);
  fit.block_names.push_back("eta");

  fit.chains.resize(options.chains);
  const std::size_t n_threads = resolve_threads(options.threads, options.chains);
  if (n_threads <= 1) {
    for (std::size_t c = 0; c < options.chains; ++c)
      fit.chains[c] = gibbs_detail::run_chain(data, priors, options, c, fit.n_cols());
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(options.chains);
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t c = next.fetch_add(1);
          if (c >= options.chains) return;
          try {
            fit.chains[c] = gibbs_detail::run_chain(data, priors, options, c, fit.n_cols());
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  fit.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fit;
}

}  // namespace phenlca

#endif
