#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "phenlca/model_target.hpp"
#include "phenlca/vb.hpp"

#include "support/fixtures.hpp"
#include "support/oracle.hpp"
#include "support/toy_target.hpp"

using namespace phenlca;

namespace {

struct SmallInstance {
  Dataset data;
  PriorSpec priors;
};

SmallInstance small_instance(std::size_t n_patients, std::uint64_t seed) {
  phenlca::Rng rng(seed);
  auto inst = oracle::random_instance(rng, n_patients, 1, 1, 1, 1);
  SmallInstance out;
  out.data.shape = inst.shape;
  out.data.patients = inst.records;
  out.priors = default_priors(inst.shape);
  return out;
}

}  // namespace

// ---- adam ----

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  AdamState st(3);
  std::vector<double> x{1.0, -2.0, 0.5};
  const std::vector<double> before = x;
  const std::vector<double> g(3, 0.0);
  adam_step(st, x, g, 0.1);
  CHECK(x == before);
}

TEST_CASE("adam first step magnitude is lr over one plus eps") {
  AdamState st(1);
  std::vector<double> x{0.0};
  const std::vector<double> g{1.0};
  adam_step(st, x, g, 0.1);
  CHECK_THAT(x[0], Catch::Matchers::WithinAbs(0.1, 1e-8));
  CHECK(x[0] == Catch::Approx(0.1 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam is deterministic for identical states and gradients") {
  AdamState a(2), b(2);
  std::vector<double> xa{0.3, -0.7}, xb{0.3, -0.7};
  const std::vector<double> g{0.2, -1.3};
  for (int t = 0; t < 5; ++t) {
    adam_step(a, xa, g, 0.05);
    adam_step(b, xb, g, 0.05);
  }
  CHECK(xa == xb);
}

// ---- stopping rule ----

TEST_CASE("stopping_check patience example") {
  StoppingRule rule;
  rule.max_iters = 1000;
  rule.rel_tol = 1e-3;
  rule.window = 1;
  rule.patience = 1;
  std::vector<TracePoint> trace;
  const double vals[] = {-10.0, -5.0, -6.0, -4.0, -4.5};
  for (std::size_t i = 0; i < 5; ++i) {
    TracePoint pt;
    pt.iteration = (i + 1) * 10;
    pt.elbo = vals[i];
    pt.rel_change = i == 0 ? std::numeric_limits<double>::quiet_NaN()
                           : std::abs(vals[i] - vals[i - 1]) / std::abs(vals[i - 1]);
    trace.push_back(pt);
  }
  CHECK(stopping_check(trace, rule) == StopReason::patience);
  double best = trace[0].elbo;
  for (const auto& pt : trace) best = std::max(best, pt.elbo);
  CHECK(best == -4.0);
}

TEST_CASE("stopping_check constant trace stops on rel_tol at the window") {
  StoppingRule rule;
  rule.max_iters = 1000;
  rule.rel_tol = 1e-2;
  rule.window = 5;
  rule.patience = 100;
  std::vector<TracePoint> trace;
  for (std::size_t i = 0; i < 5; ++i) {
    TracePoint pt;
    pt.iteration = (i + 1) * 10;
    pt.elbo = -7.0;
    pt.rel_change = i == 0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
    trace.push_back(pt);
    const StopReason r = stopping_check(trace, rule);
    if (i < 4) {
      CHECK(r == StopReason::none);
    } else {
      CHECK(r == StopReason::rel_tol);  // at evaluation 5
    }
  }
}

TEST_CASE("stopping_check max_iters") {
  StoppingRule rule;
  rule.max_iters = 50;
  rule.window = 2;
  rule.patience = 100;
  std::vector<TracePoint> trace(1);
  trace[0].iteration = 50;
  trace[0].elbo = 1.0;
  CHECK(stopping_check(trace, rule) == StopReason::max_iters);
}

TEST_CASE("stopping rule validation") {
  StoppingRule rule;
  rule.patience = 5;
  rule.window = 10;  // patience < window
  CHECK_THROWS_AS(rule.validate(), config_error);
}

// ---- ELBO estimate ----

TEST_CASE("ELBO of a prior-matched family is zero within Monte Carlo error") {
  // zero patients, single code block with standard-normal prior
  Dataset data;
  data.shape = {0, 0, 1, 0};
  PriorSpec priors = fixtures::two_patient_priors();
  priors.w = GaussianPrior({0.0, 0.0}, Matrix(2, 1.0));
  const ModelTarget target(data, priors);
  REQUIRE(target.dim() == 2);

  VariationalState q(2);  // q = N(0, I) = prior
  std::fill(q.log_sigma.begin(), q.log_sigma.end(), 0.0);

  phenlca::Rng rng(2718);
  const double elbo = elbo_estimate(q, target, 10000, rng);
  CHECK(std::abs(elbo) < 3.0 / std::sqrt(10000.0));
}

TEST_CASE("collapsed family ELBO approaches the point density plus entropy") {
  const SmallInstance inst = small_instance(4, 5150);
  const ModelTarget target(inst.data, inst.priors);
  VariationalState q(target.dim());
  phenlca::Rng init(3);
  for (auto& m : q.mu) m = init.normal(0.0, 0.3);
  std::fill(q.log_sigma.begin(), q.log_sigma.end(), std::log(1e-6));

  phenlca::Rng rng(9);
  const double elbo = elbo_estimate(q, target, 32, rng);
  const double expected = target.value_full(q.mu) + q.entropy();
  CHECK_THAT(elbo, Catch::Matchers::WithinAbs(expected, 1e-3));
}

TEST_CASE("minibatch ELBO estimator is unbiased for the full-data estimator") {
  const SmallInstance inst = small_instance(12, 21);
  const ModelTarget target(inst.data, inst.priors);
  VariationalState q(target.dim());
  phenlca::Rng init(31);
  for (auto& m : q.mu) m = init.normal(0.0, 0.2);
  std::fill(q.log_sigma.begin(), q.log_sigma.end(), std::log(0.3));

  const std::size_t reps = 200, batch = 4, n = 12;
  std::vector<double> full(reps), mini(reps);
  phenlca::Rng rng(77);
  for (std::size_t r = 0; r < reps; ++r) {
    full[r] = elbo_estimate(q, target, 4, rng);
    std::vector<std::size_t> items;
    while (items.size() < batch) {
      const std::size_t cand = rng.index(n);
      bool dup = false;
      for (std::size_t c : items) dup |= (c == cand);
      if (!dup) items.push_back(cand);
    }
    mini[r] = elbo_estimate_batch(q, target, items, double(n) / double(batch), 4, rng);
  }
  const double mf = mean(full), mm = mean(mini);
  const double se =
      std::sqrt(variance(full) / reps + variance(mini) / reps);
  CHECK(std::abs(mf - mm) <= 3.0 * se);
}

// ---- gradients ----

TEST_CASE("model target density matches log_joint plus Jacobian") {
  const SmallInstance inst = small_instance(5, 99);
  const ModelTarget target(inst.data, inst.priors);
  const ParamLayout& layout = target.layout();
  phenlca::Rng rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> theta(layout.dim());
    for (auto& t : theta) t = rng.normal(0.0, 0.8);
    const TransformResult con = to_constrained(theta, inst.priors, layout);
    const ParamSet p = layout.unflatten(con.value);
    const double expected = log_joint(inst.data, p, inst.priors) + con.log_jacobian;
    CHECK(target.value_full(theta) == Catch::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("analytic gradient matches finite differences of the density") {
  const SmallInstance inst = small_instance(4, 2024);
  const ModelTarget target(inst.data, inst.priors);
  phenlca::Rng rng(5);
  std::vector<double> theta(target.dim());
  for (auto& t : theta) t = rng.normal(0.0, 0.6);
  std::vector<double> grad(target.dim(), 0.0);
  target.grad_full(theta, grad);
  const double h = 1e-5;
  for (std::size_t c = 0; c < target.dim(); ++c) {
    auto up = theta, dn = theta;
    up[c] += h;
    dn[c] -= h;
    const double fd = (target.value_full(up) - target.value_full(dn)) / (2.0 * h);
    CHECK_THAT(grad[c], Catch::Matchers::WithinAbs(fd, 1e-5 * std::max(1.0, std::abs(fd))));
  }
}

TEST_CASE("reparameterization gradient matches common-random-number differences") {
  const SmallInstance inst = small_instance(3, 314);
  const ModelTarget target(inst.data, inst.priors);
  phenlca::Rng setup(41);

  for (int point = 0; point < 3; ++point) {
    VariationalState q(target.dim());
    for (auto& m : q.mu) m = setup.normal(0.0, 0.5);
    for (auto& ls : q.log_sigma) ls = setup.normal(-1.0, 0.3);

    const std::uint64_t crn_seed = 1000 + static_cast<std::uint64_t>(point);
    phenlca::Rng grad_rng(crn_seed);
    const ElboGradient g = elbo_gradient(q, target, 8, grad_rng);

    const double h = 1e-4;
    auto estimate_at = [&](const VariationalState& qq) {
      phenlca::Rng r(crn_seed);
      return elbo_estimate(qq, target, 8, r);
    };
    double worst = 0.0;
    for (std::size_t c = 0; c < target.dim(); ++c) {
      {
        VariationalState up = q, dn = q;
        up.mu[c] += h;
        dn.mu[c] -= h;
        const double fd = (estimate_at(up) - estimate_at(dn)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - g.mu[c]) /
                                    std::max({1.0, std::abs(fd), std::abs(g.mu[c])}));
      }
      {
        VariationalState up = q, dn = q;
        up.log_sigma[c] += h;
        dn.log_sigma[c] -= h;
        const double fd = (estimate_at(up) - estimate_at(dn)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - g.log_sigma[c]) /
                                    std::max({1.0, std::abs(fd), std::abs(g.log_sigma[c])}));
      }
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("gradient vanishes at the stationary point of a data-free problem") {
  Dataset data;
  data.shape = {0, 0, 1, 0};
  PriorSpec priors = fixtures::two_patient_priors();
  priors.w = GaussianPrior({0.0, 0.0}, Matrix(2, 1.0));
  const ModelTarget target(data, priors);
  VariationalState q(2);
  std::fill(q.log_sigma.begin(), q.log_sigma.end(), 0.0);  // q = prior

  const std::size_t reps = 30, n_mc = 64;
  std::vector<std::vector<double>> samples(4);
  for (std::size_t r = 0; r < reps; ++r) {
    phenlca::Rng rng(100 + r);
    const ElboGradient g = elbo_gradient(q, target, n_mc, rng);
    samples[0].push_back(g.mu[0]);
    samples[1].push_back(g.mu[1]);
    samples[2].push_back(g.log_sigma[0]);
    samples[3].push_back(g.log_sigma[1]);
  }
  for (const auto& s : samples) {
    const double m = mean(s);
    const double se = std::sqrt(variance(s) / static_cast<double>(reps));
    CHECK(std::abs(m) <= 3.5 * se + 1e-12);
  }
}

// ---- svi_fit ----

TEST_CASE("svi recovers the conjugate Gaussian posterior") {
  toy::GaussianMeanTarget target;
  phenlca::Rng data_rng(2022);
  for (int i = 0; i < 20; ++i) target.y.push_back(data_rng.normal(1.3, 1.0));

  SviOptions opt;
  opt.lr = 0.05;
  opt.n_mc_grad = 16;
  opt.n_mc_eval = 256;
  opt.eval_every = 200;
  opt.rule.max_iters = 60000;
  opt.rule.rel_tol = 1e-7;
  opt.rule.window = 10;
  opt.rule.patience = 100;
  opt.seed = 7;
  const SviFit fit = svi_fit(target, opt);

  CHECK_THAT(fit.state.mu[0], Catch::Matchers::WithinAbs(target.posterior_mean(), 1e-2));
  const double qvar = std::exp(2.0 * fit.state.log_sigma[0]);
  CHECK(qvar == Catch::Approx(target.posterior_var()).epsilon(0.2));
}

TEST_CASE("svi with minibatches also recovers the conjugate posterior") {
  toy::GaussianMeanTarget target;
  phenlca::Rng data_rng(11);
  for (int i = 0; i < 50; ++i) target.y.push_back(data_rng.normal(-0.8, 1.0));

  SviOptions opt;
  opt.lr = 0.1;
  opt.minibatch = 10;
  opt.n_mc_grad = 8;
  opt.n_mc_eval = 128;
  opt.eval_every = 100;
  opt.rule.max_iters = 60000;
  opt.rule.rel_tol = 1e-7;
  opt.rule.window = 10;
  opt.rule.patience = 60;
  opt.seed = 3;
  const SviFit fit = svi_fit(target, opt);
  CHECK_THAT(fit.state.mu[0], Catch::Matchers::WithinAbs(target.posterior_mean(), 2e-2));
}

TEST_CASE("svi returns exactly the best recorded snapshot") {
  const SmallInstance inst = small_instance(6, 61);
  const ModelTarget target(inst.data, inst.priors);
  SviOptions opt;
  opt.lr = 0.05;
  opt.n_mc_grad = 4;
  opt.n_mc_eval = 16;
  opt.eval_every = 20;
  opt.rule.max_iters = 2000;
  opt.rule.rel_tol = 1e-6;
  opt.rule.window = 5;
  opt.rule.patience = 20;
  opt.seed = 12;
  const SviFit fit = svi_fit(target, opt);

  double best = -1e300;
  for (const auto& pt : fit.state.trace) best = std::max(best, pt.elbo);
  CHECK(fit.state.best.elbo == best);  // exact bookkeeping equality
  CHECK(fit.state.mu == fit.state.best.mu);
  CHECK(fit.state.log_sigma == fit.state.best.log_sigma);
  // best elbo is non-decreasing along the trace
  double running = -1e300;
  for (const auto& pt : fit.state.trace) {
    if (pt.is_best) CHECK(pt.elbo > running);
    running = std::max(running, pt.elbo);
  }
}

TEST_CASE("svi is deterministic given a seed") {
  const SmallInstance inst = small_instance(5, 8);
  const ModelTarget target(inst.data, inst.priors);
  SviOptions opt;
  opt.eval_every = 25;
  opt.rule.max_iters = 500;
  opt.rule.window = 3;
  opt.rule.patience = 10;
  opt.seed = 99;
  const SviFit a = svi_fit(target, opt);
  const SviFit b = svi_fit(target, opt);
  CHECK(a.state.mu == b.state.mu);
  CHECK(a.state.log_sigma == b.state.log_sigma);
  CHECK(a.iterations == b.iterations);
}

// ---- posterior draws ----

TEST_CASE("vb_posterior_draws from a collapsed family concentrate at the mean") {
  const SmallInstance inst = small_instance(3, 5);
  const ModelTarget target(inst.data, inst.priors);
  const ParamLayout& layout = target.layout();
  VariationalState q(target.dim());
  phenlca::Rng init(2);
  for (auto& m : q.mu) m = init.normal(0.0, 0.4);
  std::fill(q.log_sigma.begin(), q.log_sigma.end(), std::log(1e-8));

  phenlca::Rng rng(4);
  const DrawMatrix draws = vb_posterior_draws(q, inst.priors, layout, 50, rng);
  const TransformResult center = to_constrained(q.mu, inst.priors, layout);
  REQUIRE(draws.rows == 50);
  for (std::size_t r = 0; r < draws.rows; ++r)
    for (std::size_t c = 0; c < draws.cols(); ++c)
      CHECK_THAT(draws.at(r, c), Catch::Matchers::WithinAbs(center.value[c], 1e-6));
}

TEST_CASE("vb_posterior_draws respect constraints and the Gaussian mean") {
  const SmallInstance inst = small_instance(4, 44);
  const ModelTarget target(inst.data, inst.priors);
  const ParamLayout& layout = target.layout();
  VariationalState q(target.dim());
  phenlca::Rng init(6);
  for (auto& m : q.mu) m = init.normal(0.0, 0.5);
  std::fill(q.log_sigma.begin(), q.log_sigma.end(), std::log(0.4));

  phenlca::Rng rng(8);
  const std::size_t n = 4000;
  const DrawMatrix draws = vb_posterior_draws(q, inst.priors, layout, n, rng);

  // tau2 columns all positive
  const std::size_t tau_col = layout.tau2_off(0);
  double mean_eta_u = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    CHECK(draws.at(r, tau_col) > 0.0);
    mean_eta_u += eta_to_unconstrained(draws.at(r, layout.eta_off(0)), inst.priors.eta_a,
                                       inst.priors.eta_b);
  }
  mean_eta_u /= static_cast<double>(n);
  // unconstrained draw mean within 3 sigma / sqrt(n) of mu
  CHECK_THAT(mean_eta_u, Catch::Matchers::WithinAbs(q.mu[layout.eta_off(0)],
                                                    3.0 * 0.4 / std::sqrt(double(n))));
}
