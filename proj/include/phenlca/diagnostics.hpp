#ifndef PHENLCA_DIAGNOSTICS_HPP
#define PHENLCA_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "phenlca/draws.hpp"
#include "phenlca/errors.hpp"
#include "phenlca/math.hpp"
#include "phenlca/model.hpp"
#include "phenlca/transforms.hpp"
#include "phenlca/types.hpp"

namespace phenlca {

inline constexpr double diag_undefined = std::numeric_limits<double>::quiet_NaN();

namespace diag_detail {

// Splits every chain in half, dropping the middle draw of odd chains.
inline std::vector<std::vector<double>> split_halves(
    const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + h);
    out.emplace_back(c.end() - h, c.end());
  }
  return out;
}

inline void require_draws(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw diag_error("diagnostics: no chains");
  for (const auto& c : chains)
    if (c.size() < 4) throw diag_error("diagnostics: need at least 4 draws per chain");
}

// Biased (1/n) autocovariance at one lag.
inline double autocov(const std::vector<double>& x, double mean, std::size_t lag) {
  double s = 0.0;
  for (std::size_t i = 0; i + lag < x.size(); ++i)
    s += (x[i] - mean) * (x[i + lag] - mean);
  return s / static_cast<double>(x.size());
}

}  // namespace diag_detail

// Split R-hat: between/within variance ratio over half chains. Returns the
// NaN sentinel for zero-variance input instead of crashing.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  diag_detail::require_draws(chains);
  const auto seqs = diag_detail::split_halves(chains);
  const std::size_t m = seqs.size();
  const std::size_t n = seqs[0].size();
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean(seqs[c]);
    vars[c] = variance(seqs[c]);
  }
  const double w = mean(vars);
  if (!(w > 0.0)) return diag_undefined;
  const double b_over_n = m > 1 ? variance(means) : 0.0;
  const double var_plus =
      (static_cast<double>(n - 1) / static_cast<double>(n)) * w + b_over_n;
  return std::sqrt(var_plus / w);
}

// Bulk effective sample size from initial-positive-sequence autocorrelation
// sums pooled across split chains, capped at the total draw count.
inline double ess_bulk(const std::vector<std::vector<double>>& chains) {
  diag_detail::require_draws(chains);
  const auto seqs = diag_detail::split_halves(chains);
  const std::size_t m = seqs.size();
  const std::size_t n = seqs[0].size();
  const double total = static_cast<double>(m * n);

  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean(seqs[c]);
    vars[c] = variance(seqs[c]);
  }
  const double w = mean(vars);
  if (!(w > 0.0)) return diag_undefined;
  const double b_over_n = m > 1 ? variance(means) : 0.0;
  const double var_plus =
      (static_cast<double>(n - 1) / static_cast<double>(n)) * w + b_over_n;

  auto rho = [&](std::size_t t) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c)
      acc += diag_detail::autocov(seqs[c], means[c], t) * static_cast<double>(n) /
             static_cast<double>(n - 1);
    acc /= static_cast<double>(m);
    return 1.0 - (w - acc) / var_plus;
  };

  // Geyer initial monotone positive sequence over lag pairs.
  double tau = 1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  return std::min(total, total / tau);
}

// ---- summaries ----

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double q025 = 0.0, q975 = 0.0;
  double rhat = diag_undefined;      // NaN when undefined (single chain, no variance)
  double ess = diag_undefined;
};

// Per-column means, central 95% intervals, split R-hat and bulk ESS.
// Single-chain input (the VB case) leaves R-hat undefined.
inline std::vector<SummaryRow> summarize(const std::vector<DrawMatrix>& chains) {
  if (chains.empty()) throw diag_error("summarize: no chains");
  const std::size_t cols = chains[0].cols();
  for (const auto& c : chains)
    if (c.cols() != cols) throw diag_error("summarize: column mismatch between chains");

  std::vector<SummaryRow> out;
  out.reserve(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    SummaryRow row;
    row.name = chains[0].names[c];
    std::vector<double> pooled;
    std::vector<std::vector<double>> per_chain;
    for (const auto& ch : chains) {
      per_chain.push_back(ch.column(c));
      pooled.insert(pooled.end(), per_chain.back().begin(), per_chain.back().end());
    }
    row.mean = mean(pooled);
    row.q025 = quantile(pooled, 0.025);
    row.q975 = quantile(pooled, 0.975);
    if (per_chain[0].size() >= 4) {
      row.ess = ess_bulk(per_chain);
      if (chains.size() > 1) row.rhat = split_rhat(per_chain);
    }
    out.push_back(std::move(row));
  }
  return out;
}

// Derived-quantity draws: maps every row through derived_quantities so the
// usual summaries apply to sensitivities, specificities and shifts.
inline std::vector<DrawMatrix> derived_chains(const std::vector<DrawMatrix>& chains,
                                              const Dataset& data,
                                              const ChannelNames& names) {
  const ParamLayout layout{data.shape, data.n()};
  const auto expect = layout.names();
  std::vector<DrawMatrix> out;
  for (const auto& ch : chains) {
    if (ch.names != expect)
      throw shape_error("derived_chains: draw columns do not match the dataset layout");
    DrawMatrix d;
    d.names = derived_names(data.shape, names);
    d.rows = ch.rows;
    d.data.reserve(ch.rows * d.names.size());
    for (std::size_t r = 0; r < ch.rows; ++r) {
      const ParamSet p = layout.unflatten(ch.row(r));
      const std::vector<double> flat = derived_flat(derived_quantities(p, data));
      d.data.insert(d.data.end(), flat.begin(), flat.end());
    }
    out.push_back(std::move(d));
  }
  return out;
}

// ---- pairs correlation ----

struct PairsResult {
  std::vector<std::string> names;
  Matrix correlation;                         // NaN entries for zero-variance pairs
  std::vector<std::pair<std::size_t, std::size_t>> high_pairs;  // |rho| > 0.9
};

inline PairsResult pairs_correlation(const DrawMatrix& pooled,
                                     const std::vector<std::size_t>& cols) {
  if (cols.size() < 2) throw diag_error("pairs_correlation: need at least 2 parameters");
  PairsResult res;
  res.correlation = Matrix(cols.size());
  std::vector<std::vector<double>> data;
  for (std::size_t c : cols) {
    res.names.push_back(pooled.names.at(c));
    data.push_back(pooled.column(c));
  }
  std::vector<double> mu(cols.size()), sd(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    mu[i] = mean(data[i]);
    sd[i] = std::sqrt(variance(data[i]));
  }
  for (std::size_t i = 0; i < cols.size(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double rho;
      if (!(sd[i] > 0.0) || !(sd[j] > 0.0)) {
        rho = i == j ? 1.0 : diag_undefined;
      } else if (i == j) {
        rho = 1.0;
      } else {
        double acc = 0.0;
        for (std::size_t r = 0; r < data[i].size(); ++r)
          acc += (data[i][r] - mu[i]) * (data[j][r] - mu[j]);
        rho = acc / (static_cast<double>(data[i].size() - 1) * sd[i] * sd[j]);
        rho = std::clamp(rho, -1.0, 1.0);
      }
      res.correlation(i, j) = rho;
      res.correlation(j, i) = rho;
      if (i != j && std::isfinite(rho) && std::abs(rho) > 0.9)
        res.high_pairs.emplace_back(j, i);
    }
  }
  return res;
}

// ---- pointwise log likelihood ----

struct LoglikMatrix {
  std::size_t draws = 0, patients = 0;
  std::vector<double> data;  // draws x patients
  double at(std::size_t s, std::size_t i) const { return data[s * patients + i]; }
};

// Entry (s, i) is the class-marginalized patient log likelihood of draw s.
inline LoglikMatrix pointwise_loglik(const std::vector<DrawMatrix>& chains,
                                     const Dataset& data) {
  const ParamLayout layout{data.shape, data.n()};
  const auto expect = layout.names();
  LoglikMatrix out;
  out.patients = data.n();
  for (const auto& ch : chains) {
    if (ch.names != expect)
      throw shape_error("pointwise_loglik: draw columns do not match the dataset layout");
    for (std::size_t r = 0; r < ch.rows; ++r) {
      const ParamSet p = layout.unflatten(ch.row(r));
      for (std::size_t i = 0; i < data.n(); ++i)
        out.data.push_back(log_marginal_patient(data.patients[i], p, i));
      ++out.draws;
    }
  }
  return out;
}

// ---- generalized Pareto tail fit (Zhang & Stephens 2009 estimator) ----

struct GpdFit {
  double k = 0.0;      // shape, heavy tail for k > 0
  double sigma = 1.0;  // scale
};

inline GpdFit gpd_fit_tail(std::vector<double> x, bool regularize = true) {
  if (x.size() < 5) throw diag_error("gpd_fit_tail: need at least 5 tail samples");
  for (double v : x)
    if (!(v > 0.0)) throw diag_error("gpd_fit_tail: tail samples must be positive");
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  const std::size_t grid = 30 + static_cast<std::size_t>(std::floor(std::sqrt(double(n))));
  const double xstar = x[static_cast<std::size_t>(std::floor(double(n) / 4.0 + 0.5))];
  const double xmax = x[n - 1];

  std::vector<double> theta(grid), logw(grid);
  for (std::size_t j = 0; j < grid; ++j) {
    theta[j] = 1.0 / xmax + (1.0 - std::sqrt(double(grid) / (double(j) + 0.5))) /
                                (3.0 * xstar);
    // profile log likelihood at theta_j
    double kj = 0.0;
    for (double v : x) kj += std::log1p(-theta[j] * v);
    kj /= -static_cast<double>(n);
    logw[j] = double(n) * (std::log(theta[j] / kj) + kj - 1.0);
  }
  const double lmax = *std::max_element(logw.begin(), logw.end());
  double wsum = 0.0, theta_hat = 0.0;
  for (std::size_t j = 0; j < grid; ++j) {
    const double w = std::exp(logw[j] - lmax);
    wsum += w;
    theta_hat += w * theta[j];
  }
  theta_hat /= wsum;

  GpdFit fit;
  double k = 0.0;  // xi convention: k > 0 is a heavy tail
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= static_cast<double>(n);
  fit.k = k;
  fit.sigma = -k / theta_hat;
  if (regularize)  // weakly informative shrink toward 0.5, as in standard PSIS
    fit.k = (static_cast<double>(n) * fit.k + 5.0) / (static_cast<double>(n) + 10.0);
  return fit;
}

// GPD quantile in the same convention as gpd_fit_tail.
inline double gpd_quantile(double p, double k, double sigma) {
  if (std::abs(k) < 1e-12) return -sigma * std::log1p(-p);
  return sigma * (std::pow(1.0 - p, -k) - 1.0) / k;
}

// ---- PSIS-LOO ----

struct ParetoDiag {
  double khat = 0.0;
  enum class Category { good, ok, bad } category = Category::good;
};

inline ParetoDiag::Category pareto_category(double k) {
  if (k < 0.5) return ParetoDiag::Category::good;
  if (k <= 1.0) return ParetoDiag::Category::ok;
  return ParetoDiag::Category::bad;
}

struct PsisResult {
  double elpd_loo = 0.0;
  double lpd = 0.0;  // in-sample log pointwise predictive density
  std::vector<double> elpd_i;
  std::vector<ParetoDiag> diags;
  std::size_t n_good = 0, n_ok = 0, n_bad = 0;
  bool low_draw_warning = false;
};

// Approximate leave-one-out cross-validation via Pareto-smoothed importance
// ratios: per observation the largest min(0.2 S, 3 sqrt(S)) ratios are
// replaced by fitted GPD quantiles and truncated at the raw maximum.
inline PsisResult psis_loo(const LoglikMatrix& ll) {
  const std::size_t S = ll.draws, N = ll.patients;
  if (S < 2 || N < 1) throw diag_error("psis_loo: need at least 2 draws and 1 observation");
  PsisResult res;
  res.low_draw_warning = S < 100;
  res.elpd_i.resize(N);
  res.diags.resize(N);

  const std::size_t tail_len = static_cast<std::size_t>(
      std::min(0.2 * static_cast<double>(S), 3.0 * std::sqrt(static_cast<double>(S))));

  std::vector<double> logratio(S), logw(S);
  std::vector<std::size_t> order(S);
  for (std::size_t i = 0; i < N; ++i) {
    bool finite = true;
    for (std::size_t s = 0; s < S; ++s) {
      logratio[s] = -ll.at(s, i);
      finite &= std::isfinite(logratio[s]);
    }
    if (!finite) {
      res.diags[i] = {std::numeric_limits<double>::infinity(),
                      ParetoDiag::Category::bad};
      res.elpd_i[i] = diag_undefined;
      ++res.n_bad;
      continue;
    }
    const double shift = *std::max_element(logratio.begin(), logratio.end());
    for (std::size_t s = 0; s < S; ++s) logw[s] = logratio[s] - shift;

    double khat = std::numeric_limits<double>::infinity();
    if (tail_len >= 5) {
      for (std::size_t s = 0; s < S; ++s) order[s] = s;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return logw[a] < logw[b]; });
      const double cutoff = std::exp(logw[order[S - tail_len - 1]]);
      std::vector<double> exceed;
      exceed.reserve(tail_len);
      for (std::size_t t = S - tail_len; t < S; ++t)
        exceed.push_back(std::exp(logw[order[t]]) - cutoff);
      bool fit_ok = true;
      GpdFit fit;
      try {
        // strip non-positive exceedances produced by ties at the cutoff
        std::vector<double> pos;
        for (double e : exceed)
          if (e > 0.0) pos.push_back(e);
        fit = gpd_fit_tail(pos);
      } catch (const diag_error&) {
        fit_ok = false;
      }
      if (fit_ok && std::isfinite(fit.k)) {
        khat = fit.k;
        for (std::size_t t = 0; t < tail_len; ++t) {
          const double p = (static_cast<double>(t) + 0.5) / static_cast<double>(tail_len);
          const double smoothed = cutoff + gpd_quantile(p, fit.k, fit.sigma);
          logw[order[S - tail_len + t]] = std::min(std::log(smoothed), 0.0);
        }
      }
    }
    res.diags[i].khat = khat;
    res.diags[i].category = pareto_category(khat);
    switch (res.diags[i].category) {
      case ParetoDiag::Category::good: ++res.n_good; break;
      case ParetoDiag::Category::ok: ++res.n_ok; break;
      case ParetoDiag::Category::bad: ++res.n_bad; break;
    }

    // elpd_i = log sum(w * lik) - log sum(w), in log space
    std::vector<double> num(S), den(S);
    for (std::size_t s = 0; s < S; ++s) {
      num[s] = logw[s] + ll.at(s, i);
      den[s] = logw[s];
    }
    res.elpd_i[i] = log_sum_exp(num) - log_sum_exp(den);
    res.elpd_loo += res.elpd_i[i];

    // in-sample pointwise density
    std::vector<double> lls(S);
    for (std::size_t s = 0; s < S; ++s) lls[s] = ll.at(s, i);
    res.lpd += log_sum_exp(lls) - std::log(static_cast<double>(S));
  }
  return res;
}

}  // namespace phenlca

#endif
