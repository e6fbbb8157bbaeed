// Scratch harness used during development; not registered in ctest.
#include <string>
#include <cstdio>
#include <span>

#include "phenlca/gibbs.hpp"
#include "phenlca/synth.hpp"

#include "support/fixtures.hpp"

using namespace phenlca;

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 2000;
  const std::size_t iters = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 2500;
  const std::size_t warm = argc > 3 ? std::strtoul(argv[3], nullptr, 10) : 1000;

  const fixtures::Cohort c = fixtures::default_cohort(n, 2025);
  std::printf("n=%zu prevalence=%.4f offset=%.3f\n", n, c.synth.prevalence_empirical,
              c.synth.d_offset);

  // truth restated in standardized units with the offset folded into eta
  ParamSet truth_fold = c.synth.truth;
  {
    const PriorSpec pr = default_priors(c.data.shape);
    for (std::size_t j = 0; j < c.data.shape.J; ++j) {
      const double sd = c.data.y_scale[j].sd, mean = c.data.y_scale[j].mean;
      for (auto& v : truth_fold.beta_y[j]) v /= sd;
      truth_fold.beta_y[j][0] -= mean / sd;
      truth_fold.tau2[j] /= sd * sd;
    }
    for (auto& e : truth_fold.eta) {
      e += c.synth.d_offset;
      e = std::min(pr.eta_b - 1e-6, std::max(pr.eta_a + 1e-6, e));
    }
  }

  GibbsOptions opt;
  opt.chains = 2;
  opt.iters = iters;
  opt.warmup = warm;
  opt.seed = 31;
  if (argc > 4 && std::string(argv[4]) == "prior") {
    opt.init = GibbsInit::prior;
    std::printf("prior-mean init\n");
  }
  if (argc > 4 && std::string(argv[4]) == "truth") {
    opt.init_params = std::make_shared<const ParamSet>(truth_fold);
    opt.jitter = 0.0;
    std::printf("initializing at folded truth\n");
  }
  const GibbsFit fit = gibbs_fit(c.data, default_priors(c.data.shape), opt);
  std::printf("wall=%.1fs accept:", fit.wall_seconds);
  for (double a : fit.chains[0].accept_rate) std::printf(" %.2f", a);
  std::printf("\n");

  const ParamLayout layout{c.data.shape, c.data.n()};
  std::vector<double> acc(13, 0.0);
  std::size_t count = 0;
  for (const auto& ch : fit.chains)
    for (std::size_t d = 0; d < ch.kept; ++d) {
      const std::span<const double> row(ch.draws.data() + d * fit.n_cols(), fit.n_cols());
      const ParamSet p = layout.unflatten(row);
      const DerivedReport rep = derived_quantities(p, c.data);
      std::size_t at = 0;
      for (int k = 0; k < 2; ++k) {
        acc[at++] += rep.codes[k].sens;
        acc[at++] += rep.codes[k].spec;
      }
      for (int l = 0; l < 2; ++l) {
        acc[at++] += rep.medications[l].sens;
        acc[at++] += rep.medications[l].spec;
      }
      for (int j = 0; j < 2; ++j) acc[at++] += rep.shift[j];
      acc[at++] += rep.prevalence;
      ++count;
    }
  for (auto& v : acc) v /= static_cast<double>(count);
  const char* label[] = {"t2dm sens",  "t2dm spec",  "endo sens",   "endo spec",
                         "metf sens",  "metf spec",  "insulin sens", "insulin spec",
                         "shift1 std", "shift2 std", "prevalence"};
  const double truth[] = {0.15, 0.9996, 0.18, 0.99, 0.40, 0.98, 0.55, 0.9996,
                          fixtures::true_shift_std(c, 0), fixtures::true_shift_std(c, 1),
                          c.synth.prevalence_empirical};
  for (int i = 0; i < 11; ++i)
    std::printf("%-13s est=%8.4f truth=%8.4f diff=%+.4f\n", label[i], acc[i], truth[i],
                acc[i] - truth[i]);
  // per-chain logjoint means to eyeball convergence
  for (const auto& ch : fit.chains) {
    double m = 0.0;
    for (double v : ch.logjoint) m += v;
    std::printf("chain logjoint mean %.2f\n", m / ch.kept);
  }

  // log joint at the generating parameters, eta folded with the offset and
  // clamped into the support, biomarker blocks restated in standardized units
  ParamSet truth_std = c.synth.truth;
  for (std::size_t j = 0; j < c.data.shape.J; ++j) {
    const double sd = c.data.y_scale[j].sd, mean = c.data.y_scale[j].mean;
    for (auto& v : truth_std.beta_y[j]) v /= sd;
    truth_std.beta_y[j][0] -= mean / sd;
    truth_std.tau2[j] /= sd * sd;
  }
  const PriorSpec priors = default_priors(c.data.shape);
  for (auto& e : truth_std.eta) {
    e += c.synth.d_offset;
    e = std::min(priors.eta_b - 1e-6, std::max(priors.eta_a + 1e-6, e));
  }
  std::printf("log joint at folded truth: %.2f\n", log_joint(c.data, truth_std, priors));
  return 0;
}
