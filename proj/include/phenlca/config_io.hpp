#ifndef PHENLCA_CONFIG_IO_HPP
#define PHENLCA_CONFIG_IO_HPP

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "phenlca/errors.hpp"
#include "phenlca/types.hpp"

namespace phenlca {

using json = nlohmann::json;

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open JSON file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw parse_error(path + ": " + e.what());
  }
  return j;
}

inline void save_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write JSON file: " + path);
  out << j.dump(2) << '\n';
}

namespace detail {

// Mean entry: scalar broadcast or explicit array of length dim.
inline std::vector<double> parse_mean(const json& j, const std::string& key, std::size_t dim) {
  if (!j.contains(key)) return std::vector<double>(dim, 0.0);
  const json& v = j.at(key);
  if (v.is_number()) return std::vector<double>(dim, v.get<double>());
  std::vector<double> out = v.get<std::vector<double>>();
  if (out.size() != dim)
    throw config_error(key + ": expected length " + std::to_string(dim));
  return out;
}

// Covariance entry: scalar = common diagonal variance, array = diagonal
// variances, array of arrays = full matrix.
inline Matrix parse_cov(const json& j, const std::string& key, std::size_t dim,
                        double default_var) {
  if (!j.contains(key)) return Matrix(dim, default_var);
  const json& v = j.at(key);
  if (v.is_number()) {
    const double var = v.get<double>();
    if (!(var > 0.0)) throw config_error(key + ": variance must be positive");
    return Matrix(dim, var);
  }
  if (v.is_array() && !v.empty() && v[0].is_array()) {
    if (v.size() != dim) throw config_error(key + ": expected " + std::to_string(dim) + " rows");
    Matrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const auto row = v[i].get<std::vector<double>>();
      if (row.size() != dim) throw config_error(key + ": row length mismatch");
      for (std::size_t k = 0; k < dim; ++k) m(i, k) = row[k];
    }
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t k = 0; k < i; ++k)
        if (m(i, k) != m(k, i)) throw config_error(key + ": matrix is not symmetric");
    return m;
  }
  const auto diag = v.get<std::vector<double>>();
  if (diag.size() != dim) throw config_error(key + ": expected length " + std::to_string(dim));
  for (double d : diag)
    if (!(d > 0.0)) throw config_error(key + ": variances must be positive");
  return Matrix::diagonal(diag);
}

}  // namespace detail

inline ModelShape shape_from_json(const json& j) {
  if (!j.contains("shape")) throw config_error("missing 'shape' object");
  const json& s = j.at("shape");
  ModelShape out;
  out.M = s.value("M", 0u);
  out.J = s.value("J", 0u);
  out.K = s.value("K", 0u);
  out.L = s.value("L", 0u);
  out.validate();
  return out;
}

inline json shape_to_json(const ModelShape& s) {
  return json{{"M", s.M}, {"J", s.J}, {"K", s.K}, {"L", s.L}};
}

inline ChannelNames names_from_json(const json& j) {
  ChannelNames n;
  if (j.contains("names")) {
    const json& v = j.at("names");
    n.biomarkers = v.value("biomarkers", std::vector<std::string>{});
    n.codes = v.value("codes", std::vector<std::string>{});
    n.medications = v.value("medications", std::vector<std::string>{});
  }
  return n;
}

// Priors document: shape plus the Table-1 hyperparameters. Any omitted block
// falls back to the weakly informative defaults.
inline PriorSpec priors_from_json(const json& j, const ModelShape& shape) {
  const double default_var = 2.5 * 2.5;
  const std::size_t c = shape.coef_len();
  PriorSpec ps;
  ps.d = GaussianPrior(detail::parse_mean(j, "mu_d", shape.M),
                       detail::parse_cov(j, "sigma_d", shape.M, default_var));
  ps.r = GaussianPrior(detail::parse_mean(j, "mu_r", c),
                       detail::parse_cov(j, "sigma_r", c, default_var));
  std::vector<double> mu_y;
  if (j.contains("mu_y")) {
    mu_y = detail::parse_mean(j, "mu_y", c);
  } else {
    mu_y.assign(c, 0.0);
    mu_y[c - 1] = 1.0;  // latent-shift prior mean, identification aid
  }
  ps.y = GaussianPrior(mu_y, detail::parse_cov(j, "sigma_y", c, default_var));
  ps.w = GaussianPrior(detail::parse_mean(j, "mu_w", c),
                       detail::parse_cov(j, "sigma_w", c, default_var));
  ps.p = GaussianPrior(detail::parse_mean(j, "mu_p", c),
                       detail::parse_cov(j, "sigma_p", c, default_var));
  if (j.contains("eta_bounds")) {
    const auto b = j.at("eta_bounds").get<std::vector<double>>();
    if (b.size() != 2) throw config_error("eta_bounds: expected [a, b]");
    ps.eta_a = b[0];
    ps.eta_b = b[1];
  }
  ps.tau_shape = j.value("tau_shape", 0.1);
  ps.tau_rate = j.value("tau_rate", 0.1);
  ps.validate(shape);
  return ps;
}

struct ModelConfig {
  ModelShape shape;
  PriorSpec priors;
  ChannelNames names;
};

inline ModelConfig model_config_from_file(const std::string& path) {
  const json j = load_json_file(path);
  ModelConfig cfg;
  cfg.shape = shape_from_json(j);
  cfg.priors = priors_from_json(j, cfg.shape);
  cfg.names = names_from_json(j);
  return cfg;
}

}  // namespace phenlca

#endif
