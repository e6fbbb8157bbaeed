#ifndef PHENLCA_FITDIR_HPP
#define PHENLCA_FITDIR_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "phenlca/config_io.hpp"
#include "phenlca/dataset_io.hpp"
#include "phenlca/draws.hpp"
#include "phenlca/errors.hpp"
#include "phenlca/gibbs.hpp"
#include "phenlca/model_target.hpp"
#include "phenlca/vb.hpp"

namespace phenlca {

namespace fs = std::filesystem;

// Refusal to clobber an existing fit; the CLI maps this to its own exit code.
struct overwrite_refused : std::runtime_error {
  explicit overwrite_refused(const std::string& path)
      : std::runtime_error("refusing to overwrite existing manifest at " + path +
                           " (use --force)") {}
};

// A fit directory is identified by its manifest. Existing manifests are
// never overwritten without force.
inline void prepare_fit_dir(const fs::path& dir, bool force) {
  const fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest) && !force) throw overwrite_refused(manifest.string());
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory " + dir.string());
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << text;
}

// ---- draw matrix CSV ----

inline void write_draws_csv(const fs::path& path, const std::vector<std::string>& names,
                            std::span<const double> data, std::size_t rows) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  std::string header;
  for (const auto& n : names) {
    if (!header.empty()) header += ',';
    header += n;
  }
  out << header << '\n';
  const std::size_t cols = names.size();
  std::string line;
  for (std::size_t r = 0; r < rows; ++r) {
    line.clear();
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) line += ',';
      line += format_g17(data[r * cols + c]);
    }
    out << line << '\n';
  }
}

inline DrawMatrix read_draws_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw parse_error(path.string() + ": empty file");
  DrawMatrix m;
  m.names = detail::split_csv_line(line);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() && in.eof()) break;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != m.names.size())
      throw parse_error(path.string() + ": row " + std::to_string(row) +
                        " has wrong cell count");
    for (std::size_t c = 0; c < cells.size(); ++c)
      m.data.push_back(detail::parse_double(cells[c], row, c));
    ++m.rows;
  }
  return m;
}

// ---- shared manifest pieces ----

inline json y_scale_to_json(const std::vector<BiomarkerScale>& scale) {
  json arr = json::array();
  for (const auto& s : scale) arr.push_back({{"mean", s.mean}, {"sd", s.sd}});
  return arr;
}

inline std::vector<BiomarkerScale> y_scale_from_json(const json& arr) {
  std::vector<BiomarkerScale> out;
  for (const auto& e : arr) out.push_back({e.at("mean"), e.at("sd")});
  return out;
}

inline json names_to_json(const ChannelNames& names) {
  return json{{"biomarkers", names.biomarkers},
              {"codes", names.codes},
              {"medications", names.medications}};
}

// ---- Gibbs persistence ----

inline void save_gibbs_fit(const GibbsFit& fit, const fs::path& dir,
                           const ChannelNames& names, bool force) {
  prepare_fit_dir(dir, force);
  std::size_t draw_bytes = 0;
  for (std::size_t c = 0; c < fit.chains.size(); ++c) {
    const auto& ch = fit.chains[c];
    write_draws_csv(dir / ("chain" + std::to_string(c + 1) + ".csv"), fit.column_names,
                    ch.draws, ch.kept);
    write_draws_csv(dir / ("logjoint" + std::to_string(c + 1) + ".csv"), {"log_joint"},
                    ch.logjoint, ch.logjoint.size());
    draw_bytes += ch.draws.size() * sizeof(double);
  }

  json manifest;
  manifest["kind"] = "gibbs";
  manifest["shape"] = shape_to_json(fit.shape);
  manifest["n_patients"] = fit.n_patients;
  manifest["columns"] = fit.column_names.size();
  manifest["block_names"] = fit.block_names;
  json opts;
  opts["chains"] = fit.options.chains;
  opts["iters"] = fit.options.iters;
  opts["warmup"] = fit.options.warmup;
  opts["thin"] = fit.options.thin;
  opts["seed"] = fit.options.seed;
  opts["adapt_target"] = fit.options.adapt_target;
  opts["jitter"] = fit.options.jitter;
  opts["anchor_biomarker"] = fit.options.anchor_biomarker;
  opts["init"] = fit.options.init == GibbsInit::empirical ? "empirical" : "prior";
  opts["store_eta"] = fit.options.store_eta;
  manifest["options"] = opts;
  json chains = json::array();
  for (const auto& ch : fit.chains) {
    json c;
    c["kept"] = ch.kept;
    c["accept_rate"] = ch.accept_rate;
    c["step_size"] = ch.step_size;
    c["wall_seconds"] = ch.wall_seconds;
    chains.push_back(c);
  }
  manifest["chains"] = chains;
  manifest["timing"] = {{"wall_seconds", fit.wall_seconds}};
  manifest["memory"] = {{"draw_store_bytes", draw_bytes}};
  manifest["y_scale"] = y_scale_to_json(fit.y_scale);
  manifest["names"] = names_to_json(names);
  save_json_file((dir / "manifest.json").string(), manifest);
}

// ---- VB persistence ----

struct VbFitBundle {
  SviFit fit;
  SviOptions options;
  ModelShape shape;
  std::size_t n_patients = 0;
  std::vector<BiomarkerScale> y_scale;
  ChannelNames names;
};

inline json vb_state_to_json(const VariationalState& q) {
  return json{{"dim", q.dim()},
              {"mu", q.mu},
              {"log_sigma", q.log_sigma},
              {"best_iteration", q.best.iteration},
              {"best_elbo", q.best.elbo}};
}

inline void save_vb_fit(const VbFitBundle& bundle, const fs::path& dir, bool force,
                        const DrawMatrix* draws = nullptr) {
  prepare_fit_dir(dir, force);
  const VariationalState& q = bundle.fit.state;

  const json state = vb_state_to_json(q);
  const std::string state_text = state.dump(2) + "\n";
  write_text_file(dir / "vb_state.json", state_text);

  std::string trace_csv = "iteration,elbo,rel_change,is_best\n";
  for (const auto& pt : q.trace) {
    trace_csv += std::to_string(pt.iteration) + ',' + format_g17(pt.elbo) + ',' +
                 (std::isnan(pt.rel_change) ? "" : format_g17(pt.rel_change)) + ',' +
                 (pt.is_best ? "1" : "0") + '\n';
  }
  write_text_file(dir / "elbo_trace.csv", trace_csv);

  if (draws != nullptr)
    write_draws_csv(dir / "draws.csv", draws->names, draws->data, draws->rows);

  json manifest;
  manifest["kind"] = "vb";
  manifest["shape"] = shape_to_json(bundle.shape);
  manifest["n_patients"] = bundle.n_patients;
  json opts;
  opts["lr"] = bundle.options.lr;
  opts["lr_decay"] = bundle.options.lr_decay;
  opts["n_mc_grad"] = bundle.options.n_mc_grad;
  opts["n_mc_eval"] = bundle.options.n_mc_eval;
  opts["minibatch"] = bundle.options.minibatch;
  opts["eval_every"] = bundle.options.eval_every;
  opts["seed"] = bundle.options.seed;
  opts["max_iters"] = bundle.options.rule.max_iters;
  opts["rel_tol"] = bundle.options.rule.rel_tol;
  opts["window"] = bundle.options.rule.window;
  opts["patience"] = bundle.options.rule.patience;
  manifest["options"] = opts;
  manifest["stop_reason"] = stop_reason_name(bundle.fit.stop_reason);
  manifest["iterations"] = bundle.fit.iterations;
  manifest["evaluations"] = bundle.fit.evaluations;
  manifest["best_iteration"] = q.best.iteration;
  manifest["best_elbo"] = q.best.elbo;
  manifest["timing"] = {{"wall_seconds", bundle.fit.wall_seconds}};
  manifest["memory"] = {{"state_bytes", state_text.size()}};
  manifest["y_scale"] = y_scale_to_json(bundle.y_scale);
  manifest["names"] = names_to_json(bundle.names);
  save_json_file((dir / "manifest.json").string(), manifest);
}

// ---- loading ----

struct LoadedFit {
  std::string kind;  // "gibbs" or "vb"
  ModelShape shape;
  std::size_t n_patients = 0;
  ChannelNames names;
  std::vector<BiomarkerScale> y_scale;
  std::vector<DrawMatrix> chains;  // one entry for VB draws
  json manifest;

  // VB extras
  std::vector<TracePoint> trace;
  std::size_t best_iteration = 0;
};

inline LoadedFit load_fit(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw io_error("no manifest.json in " + dir.string());
  LoadedFit fit;
  fit.manifest = load_json_file(mpath.string());
  fit.kind = fit.manifest.value("kind", "");
  fit.shape = shape_from_json(fit.manifest);
  fit.n_patients = fit.manifest.value("n_patients", 0u);
  if (fit.manifest.contains("y_scale"))
    fit.y_scale = y_scale_from_json(fit.manifest.at("y_scale"));
  if (fit.manifest.contains("names")) {
    const json& n = fit.manifest.at("names");
    fit.names.biomarkers = n.value("biomarkers", std::vector<std::string>{});
    fit.names.codes = n.value("codes", std::vector<std::string>{});
    fit.names.medications = n.value("medications", std::vector<std::string>{});
  }

  if (fit.kind == "gibbs") {
    const std::size_t chains = fit.manifest.at("options").value("chains", 1u);
    for (std::size_t c = 1; c <= chains; ++c) {
      const fs::path p = dir / ("chain" + std::to_string(c) + ".csv");
      if (!fs::exists(p)) throw io_error("missing " + p.string());
      fit.chains.push_back(read_draws_csv(p));
    }
  } else if (fit.kind == "vb") {
    const fs::path p = dir / "draws.csv";
    if (fs::exists(p)) fit.chains.push_back(read_draws_csv(p));
    fit.best_iteration = fit.manifest.value("best_iteration", 0u);
    const fs::path tpath = dir / "elbo_trace.csv";
    if (fs::exists(tpath)) {
      std::ifstream in(tpath);
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 4) throw parse_error(tpath.string() + ": bad trace row");
        TracePoint pt;
        pt.iteration = std::stoul(cells[0]);
        pt.elbo = std::stod(cells[1]);
        pt.rel_change = cells[2].empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : std::stod(cells[2]);
        pt.is_best = cells[3] == "1";
        fit.trace.push_back(pt);
      }
    }
  } else {
    throw parse_error(dir.string() + ": unknown fit kind '" + fit.kind + "'");
  }
  return fit;
}

}  // namespace phenlca

#endif
