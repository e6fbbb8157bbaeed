#ifndef PHENLCA_SVG_HPP
#define PHENLCA_SVG_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "phenlca/draws.hpp"
#include "phenlca/vb.hpp"

namespace phenlca {

namespace svg_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct Range {
  double lo = 0.0, hi = 1.0;
  double scale(double v, double out_lo, double out_hi) const {
    if (hi == lo) return 0.5 * (out_lo + out_hi);
    return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo);
  }
};

inline Range range_of(const std::vector<double>& xs) {
  Range r{xs[0], xs[0]};
  for (double v : xs) {
    r.lo = std::min(r.lo, v);
    r.hi = std::max(r.hi, v);
  }
  if (r.lo == r.hi) {
    r.lo -= 0.5;
    r.hi += 0.5;
  }
  return r;
}

}  // namespace svg_detail

// Upper-triangle grid of scatter panels with parameter names on the
// diagonal and correlations in the lower triangle. Points are thinned with
// a deterministic stride to at most `max_points` per panel.
inline std::string svg_pairs(const DrawMatrix& pooled, const std::vector<std::size_t>& cols,
                             const Matrix& correlation, std::size_t max_points = 1000) {
  using svg_detail::num;
  const std::size_t k = cols.size();
  const double panel = 160.0, pad = 10.0, label = 30.0;
  const double size = label + k * (panel + pad);
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(size) +
         "\" height=\"" + num(size) + "\" font-family=\"monospace\" font-size=\"11\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  std::vector<std::vector<double>> data;
  std::vector<svg_detail::Range> ranges;
  for (std::size_t c : cols) {
    data.push_back(pooled.column(c));
    ranges.push_back(svg_detail::range_of(data.back()));
  }
  const std::size_t stride = std::max<std::size_t>(1, pooled.rows / max_points);

  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double x0 = label + j * (panel + pad);
      const double y0 = label + i * (panel + pad);
      out += "<rect x=\"" + num(x0) + "\" y=\"" + num(y0) + "\" width=\"" + num(panel) +
             "\" height=\"" + num(panel) + "\" fill=\"none\" stroke=\"#888\"/>\n";
      if (i == j) {
        out += "<text x=\"" + num(x0 + panel / 2) + "\" y=\"" + num(y0 + panel / 2) +
               "\" text-anchor=\"middle\">" + pooled.names.at(cols[i]) + "</text>\n";
      } else if (j > i) {  // scatter: column j on x, column i on y
        std::string pts;
        for (std::size_t r = 0; r < pooled.rows; r += stride) {
          const double px = ranges[j].scale(data[j][r], x0 + 3, x0 + panel - 3);
          const double py = ranges[i].scale(data[i][r], y0 + panel - 3, y0 + 3);
          pts += "<circle cx=\"" + num(px) + "\" cy=\"" + num(py) +
                 "\" r=\"1.2\" fill=\"#335\" fill-opacity=\"0.5\"/>";
        }
        out += pts + "\n";
      } else {
        const double rho = correlation(i, j);
        const std::string txt = std::isfinite(rho) ? num(rho) : "undefined";
        out += "<text x=\"" + num(x0 + panel / 2) + "\" y=\"" + num(y0 + panel / 2) +
               "\" text-anchor=\"middle\" font-size=\"16\">" + txt + "</text>\n";
      }
    }
  }
  out += "</svg>\n";
  return out;
}

// ELBO trace with a single vertical rule at the best iteration.
inline std::string svg_elbo_trace(const std::vector<TracePoint>& trace,
                                  std::size_t best_iteration) {
  using svg_detail::num;
  const double w = 640.0, h = 360.0, m = 45.0;
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" +
         num(h) + "\" font-family=\"monospace\" font-size=\"11\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!trace.empty()) {
    std::vector<double> xs, ys;
    for (const auto& pt : trace) {
      xs.push_back(static_cast<double>(pt.iteration));
      ys.push_back(pt.elbo);
    }
    const auto rx = svg_detail::range_of(xs);
    const auto ry = svg_detail::range_of(ys);
    std::string poly = "<polyline fill=\"none\" stroke=\"#246\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      poly += num(rx.scale(xs[i], m, w - m)) + "," + num(ry.scale(ys[i], h - m, m)) + " ";
    }
    out += poly + "\"/>\n";
    const double bx = rx.scale(static_cast<double>(best_iteration), m, w - m);
    out += "<line class=\"best-iteration\" x1=\"" + num(bx) + "\" y1=\"" + num(m) +
           "\" x2=\"" + num(bx) + "\" y2=\"" + num(h - m) +
           "\" stroke=\"#a33\" stroke-dasharray=\"4 3\"/>\n";
    out += "<text x=\"" + num(bx + 4) + "\" y=\"" + num(m + 12) + "\" fill=\"#a33\">best @ " +
           std::to_string(best_iteration) + "</text>\n";
    out += "<text x=\"" + num(m) + "\" y=\"" + num(h - 8) +
           "\">iteration</text>\n<text x=\"8\" y=\"" + num(m - 8) + "\">ELBO</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace phenlca

#endif
