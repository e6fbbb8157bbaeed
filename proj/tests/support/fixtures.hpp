// Shared dataset builders for the sampler and engine tests.
#ifndef PHENLCA_TESTS_FIXTURES_HPP
#define PHENLCA_TESTS_FIXTURES_HPP

#include <cstdint>
#include <vector>

#include "phenlca/dataset_io.hpp"
#include "phenlca/synth.hpp"
#include "phenlca/types.hpp"

namespace fixtures {

// Standardized default synthetic cohort plus generating truth restated in
// the standardized scale used by the fit.
struct Cohort {
  phenlca::Dataset data;  // standardized
  phenlca::SynthResult synth;
  phenlca::SynthConfig config;
};

inline Cohort default_cohort(std::size_t n, std::uint64_t seed) {
  Cohort c;
  c.config = phenlca::default_synth_config(n, seed);
  c.synth = phenlca::generate_cohort(c.config);
  c.data = c.synth.data;
  phenlca::standardize_biomarkers(c.data);
  return c;
}

// Generating biomarker shift in the standardized units of `data`.
inline double true_shift_std(const Cohort& c, std::size_t j) {
  return c.synth.truth.beta_y[j][c.config.shape.M + 1] / c.data.y_scale[j].sd;
}

// The 2-patient, M=0, K=1 dataset used against the grid oracle.
inline phenlca::Dataset two_patient_dataset() {
  phenlca::Dataset data;
  data.shape = {0, 0, 1, 0};
  phenlca::PatientRecord a, b;
  a.w = {1};
  b.w = {0};
  data.patients = {a, b};
  return data;
}

inline phenlca::PriorSpec two_patient_priors() {
  phenlca::PriorSpec priors;
  priors.d = phenlca::GaussianPrior({}, phenlca::Matrix(0));
  // informative latent-shift prior keeps the posterior single moded
  priors.w = phenlca::GaussianPrior({0.0, 1.0}, phenlca::Matrix(2, 1.0));
  priors.r = phenlca::GaussianPrior({0.0, 0.0}, phenlca::Matrix(2, 1.0));
  priors.y = phenlca::GaussianPrior({0.0, 0.0}, phenlca::Matrix(2, 1.0));
  priors.p = phenlca::GaussianPrior({0.0, 0.0}, phenlca::Matrix(2, 1.0));
  priors.eta_a = -3.0;
  priors.eta_b = 3.0;
  return priors;
}

}  // namespace fixtures

#endif
