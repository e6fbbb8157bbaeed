#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "phenlca/model.hpp"
#include "phenlca/rng.hpp"
#include "phenlca/transforms.hpp"

#include "support/oracle.hpp"

using namespace phenlca;

namespace {

// Single-code instance: M=0, J=0, K=1, L=0.
ParamSet single_code_params(double b0, double b1, double eta = 0.0) {
  ParamSet p;
  p.beta_w.push_back({b0, b1});
  p.eta.push_back(eta);
  return p;
}

PatientRecord single_code_record(int w) {
  PatientRecord rec;
  rec.w.push_back(static_cast<std::uint8_t>(w));
  return rec;
}

}  // namespace

TEST_CASE("linear_predictor examples") {
  CHECK(linear_predictor(std::vector<double>{}, 0, std::vector<double>{1.5, 9.0}) == 1.5);
  CHECK(linear_predictor(std::vector<double>{}, 1, std::vector<double>{-2.9444, 4.3307}) ==
        Catch::Approx(1.3863).margin(1e-9));
  CHECK(linear_predictor(std::vector<double>{2.0}, 1, std::vector<double>{1.0, 0.5, -1.0}) ==
        Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("linear_predictor rejects wrong coefficient length") {
  CHECK_THROWS_AS(linear_predictor(std::vector<double>{1.0}, 0, std::vector<double>{1.0, 2.0}),
                  shape_error);
}

TEST_CASE("log_marginal_patient degenerate shapes") {
  // No observed channels: the two class probabilities sum to one.
  ParamSet p;
  p.eta.push_back(0.7);
  PatientRecord rec;
  CHECK(log_marginal_patient(rec, p, 0) == Catch::Approx(0.0).margin(1e-12));

  // Flat single code: both classes emit probability one half.
  const ParamSet pc = single_code_params(0.0, 0.0);
  CHECK(log_marginal_patient(single_code_record(1), pc, 0) ==
        Catch::Approx(std::log(0.5)).margin(1e-12));
}

TEST_CASE("log_marginal_patient matches enumeration oracle") {
  phenlca::Rng rng(2024);
  for (int rep = 0; rep < 100; ++rep) {
    const auto inst = oracle::random_instance(rng, 12, 2, 2, 2, 2);
    for (std::size_t i = 0; i < inst.records.size(); ++i) {
      const double expected = std::log(
          oracle::marginal_likelihood_enum(inst.records[i], inst.params, inst.params.eta[i]));
      const double got = log_marginal_patient(inst.records[i], inst.params, i);
      CHECK(std::abs(got - expected) <= 1e-12 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST_CASE("log_marginal_patient ignores y where r=0") {
  phenlca::Rng rng(5);
  auto inst = oracle::random_instance(rng, 6, 1, 2, 1, 1);
  // force a missing biomarker on patient 0
  inst.records[0].r[0] = 0;
  inst.records[0].y[0] = 123.0;
  const double a = log_marginal_patient(inst.records[0], inst.params, 0);
  inst.records[0].y[0] = -4.56e8;
  const double b = log_marginal_patient(inst.records[0], inst.params, 0);
  CHECK(a == b);  // bit identical
}

TEST_CASE("class_posterior symmetric params give one half") {
  const ParamSet p = single_code_params(0.4, 0.0);  // latent coefficient zero
  CHECK(class_posterior(single_code_record(1), p, 0) == 0.5);
}

TEST_CASE("class_posterior Bayes rule hand calculation") {
  // prior 0.5, sensitivity 0.8, specificity 0.95, W=1
  const double b0 = logit(0.05);
  const double b1 = logit(0.8) - b0;
  const ParamSet p = single_code_params(b0, b1);
  const double post = class_posterior(single_code_record(1), p, 0);
  CHECK_THAT(post, Catch::Matchers::WithinAbs(0.94118, 5e-6));
  CHECK(post == Catch::Approx(0.8 / 0.85).epsilon(1e-12));
}

TEST_CASE("class_posterior matches enumeration oracle") {
  phenlca::Rng rng(77);
  const auto inst = oracle::random_instance(rng, 12, 2, 2, 2, 2);
  for (std::size_t i = 0; i < inst.records.size(); ++i) {
    const double expected =
        oracle::class_posterior_enum(inst.records[i], inst.params, inst.params.eta[i]);
    CHECK(class_posterior(inst.records[i], inst.params, i) ==
          Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("class_posterior equals expit of D predictor when latent coefficients vanish") {
  phenlca::Rng rng(99);
  auto inst = oracle::random_instance(rng, 8, 2, 1, 1, 1);
  for (auto& b : inst.params.beta_r) b[3] = 0.0;
  for (auto& b : inst.params.beta_y) b[3] = 0.0;
  for (auto& b : inst.params.beta_w) b[3] = 0.0;
  for (auto& b : inst.params.beta_p) b[3] = 0.0;
  for (std::size_t i = 0; i < inst.records.size(); ++i) {
    double alpha = inst.params.eta[i];
    for (std::size_t m = 0; m < 2; ++m) alpha += inst.records[i].x[m] * inst.params.beta_d[m];
    CHECK(class_posterior(inst.records[i], inst.params, i) == expit(alpha));  // exact
  }
}

TEST_CASE("class_posterior monotone in the latent code coefficient") {
  double prev = 0.0;
  for (double shift : {-2.0, -1.0, 0.0, 1.0, 2.0, 5.0, 20.0}) {
    const ParamSet p = single_code_params(-1.0, shift);
    const double post = class_posterior(single_code_record(1), p, 0);
    CHECK(post > 0.0);
    CHECK(post < 1.0);
    if (shift > -2.0) CHECK(post >= prev);
    prev = post;
  }
}

TEST_CASE("log_joint is minus infinity outside eta support") {
  phenlca::Rng rng(3);
  const auto inst = oracle::random_instance(rng, 4, 1, 1, 1, 1);
  Dataset data;
  data.shape = inst.shape;
  data.patients = inst.records;
  const PriorSpec priors = default_priors(inst.shape);
  ParamSet bad = inst.params;
  bad.eta[2] = priors.eta_b + 0.1;
  CHECK(log_joint(data, bad, priors) == neg_inf);
  ParamSet bad2 = inst.params;
  bad2.tau2[0] = -1.0;
  CHECK(log_joint(data, bad2, priors) == neg_inf);
}

TEST_CASE("log_joint with zero patients equals the closed-form log prior") {
  const ModelShape shape{1, 1, 1, 1};
  Dataset data;
  data.shape = shape;
  const PriorSpec priors = default_priors(shape);
  ParamSet p;
  p.beta_d = {0.3};
  p.beta_r = {{0.1, -0.2, 0.3}};
  p.beta_y = {{1.0, 0.0, 2.0}};
  p.tau2 = {1.7};
  p.beta_w = {{-0.5, 0.25, 1.5}};
  p.beta_p = {{0.0, 0.0, 0.0}};

  const double var = 6.25;
  double expected = 0.0;
  expected += oracle::log_mvn_diag_naive(p.beta_d, {0.0}, var);
  expected += oracle::log_mvn_diag_naive(p.beta_r[0], {0.0, 0.0, 0.0}, var);
  expected += oracle::log_mvn_diag_naive(p.beta_y[0], {0.0, 0.0, 1.0}, var);
  expected += oracle::log_mvn_diag_naive(p.beta_w[0], {0.0, 0.0, 0.0}, var);
  expected += oracle::log_mvn_diag_naive(p.beta_p[0], {0.0, 0.0, 0.0}, var);
  expected += oracle::log_inv_gamma_naive(p.tau2[0], 0.1, 0.1);

  CHECK(log_joint(data, p, priors) == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log_joint additivity in patients") {
  phenlca::Rng rng(11);
  const auto inst = oracle::random_instance(rng, 5, 2, 1, 1, 1);
  const PriorSpec priors = default_priors(inst.shape);

  Dataset with;
  with.shape = inst.shape;
  with.patients = inst.records;

  Dataset without = with;
  without.patients.pop_back();
  ParamSet fewer = inst.params;
  fewer.eta.pop_back();

  const double delta = log_joint(with, inst.params, priors) - log_joint(without, fewer, priors);
  const std::size_t last = inst.records.size() - 1;
  // eta prior of the extra patient enters too
  const double expected = log_marginal_patient(inst.records[last], inst.params, last) +
                          uniform_lpdf(inst.params.eta[last], priors.eta_a, priors.eta_b);
  CHECK(delta == Catch::Approx(expected).epsilon(1e-10));
}

TEST_CASE("derived_quantities inverts sensitivity and specificity") {
  const double b0 = logit(0.05);
  const double b1 = logit(0.8) - b0;
  Dataset data;
  data.shape = {0, 0, 1, 0};
  ParamSet p;
  p.beta_w = {{b0, b1}};
  const DerivedReport rep = derived_quantities(p, data);
  CHECK(rep.codes[0].sens == Catch::Approx(0.8).epsilon(1e-12));
  CHECK(rep.codes[0].spec == Catch::Approx(0.95).epsilon(1e-12));

  ParamSet flat;
  flat.beta_w = {{0.0, 0.0}};
  const DerivedReport rep2 = derived_quantities(flat, data);
  CHECK(rep2.codes[0].sens == 0.5);
  CHECK(rep2.codes[0].spec == 0.5);
}

TEST_CASE("derived_quantities reports shifts in both scales") {
  Dataset data;
  data.shape = {0, 1, 1, 0};
  data.y_scale = {{100.0, 15.0}};
  data.standardized = true;
  ParamSet p;
  p.beta_r = {{0.2, 0.5}};
  p.beta_y = {{0.0, 2.0}};
  p.tau2 = {1.0};
  p.beta_w = {{0.0, 0.0}};
  const DerivedReport rep = derived_quantities(p, data);
  CHECK(rep.shift[0] == 2.0);
  CHECK(rep.shift_raw[0] == Catch::Approx(30.0));
  CHECK(rep.biomarker_avail[0].sens == Catch::Approx(expit(0.7)).epsilon(1e-14));
  CHECK(rep.biomarker_avail[0].spec == Catch::Approx(1.0 - expit(0.2)).epsilon(1e-14));
}

TEST_CASE("derived names follow the published row labels") {
  ChannelNames names;
  names.codes = {"T2DM code", "Endocrinologist visit code"};
  names.medications = {"Metformin code", "Insulin code"};
  names.biomarkers = {"Glucose", "HbA1c"};
  const auto labels = derived_names(ModelShape{2, 2, 2, 2}, names);
  CHECK(labels[0] == "T2DM code sensitivity");
  CHECK(labels[1] == "T2DM code specificity");
  CHECK(labels[4] == "Metformin code sensitivity");
  CHECK(labels[12] == "Mean shift in Glucose");
  CHECK(labels.back() == "class prevalence");
}
