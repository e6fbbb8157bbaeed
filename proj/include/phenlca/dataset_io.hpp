#ifndef PHENLCA_DATASET_IO_HPP
#define PHENLCA_DATASET_IO_HPP

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "phenlca/errors.hpp"
#include "phenlca/types.hpp"

namespace phenlca {

inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, std::size_t row, std::size_t col) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw parse_error("row " + std::to_string(row) + ", column " + std::to_string(col + 1) +
                      ": not a number: '" + s + "'");
  return v;
}

inline std::uint8_t parse_binary(const std::string& s, std::size_t row, std::size_t col) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw parse_error("row " + std::to_string(row) + ", column " + std::to_string(col + 1) +
                    ": expected 0 or 1, got '" + s + "'");
}

// Counts a run of columns named <prefix>1..<prefix>N starting at `at`.
inline std::size_t count_prefixed(const std::vector<std::string>& header, std::size_t& at,
                                  const std::string& prefix) {
  std::size_t n = 0;
  while (at < header.size()) {
    const std::string expect = prefix + std::to_string(n + 1);
    if (header[at] != expect) break;
    ++at;
    ++n;
  }
  return n;
}

}  // namespace detail

// Header row is x1..xM,r1..rJ,y1..yJ,w1..wK,p1..pL; shape is inferred from
// it. Missing biomarker values are empty cells and must co-occur with r=0.
inline Dataset read_dataset(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw parse_error(source + ": empty file");
  const std::vector<std::string> header = detail::split_csv_line(line);

  ModelShape shape;
  std::size_t at = 0;
  shape.M = detail::count_prefixed(header, at, "x");
  shape.J = detail::count_prefixed(header, at, "r");
  const std::size_t ny = detail::count_prefixed(header, at, "y");
  if (ny != shape.J)
    throw parse_error(source + ": header has " + std::to_string(shape.J) + " r columns but " +
                      std::to_string(ny) + " y columns");
  shape.K = detail::count_prefixed(header, at, "w");
  shape.L = detail::count_prefixed(header, at, "p");
  if (at != header.size())
    throw parse_error(source + ": unexpected header column '" + header[at] + "'");
  shape.validate();

  const std::size_t ncol = shape.M + 2 * shape.J + shape.K + shape.L;
  Dataset data;
  data.shape = shape;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() && in.eof()) break;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != ncol)
      throw parse_error(source + ": row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(ncol));
    PatientRecord rec;
    std::size_t c = 0;
    for (std::size_t m = 0; m < shape.M; ++m, ++c)
      rec.x.push_back(detail::parse_double(cells[c], row, c));
    for (std::size_t j = 0; j < shape.J; ++j, ++c)
      rec.r.push_back(detail::parse_binary(cells[c], row, c));
    for (std::size_t j = 0; j < shape.J; ++j, ++c) {
      if (cells[c].empty()) {
        if (rec.r[j] != 0)
          throw parse_error(source + ": row " + std::to_string(row) + ", column " +
                            std::to_string(c + 1) + ": empty y" + std::to_string(j + 1) +
                            " but r" + std::to_string(j + 1) + "=1");
        rec.y.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        if (rec.r[j] == 0)
          throw parse_error(source + ": row " + std::to_string(row) + ", column " +
                            std::to_string(c + 1) + ": y" + std::to_string(j + 1) +
                            " present but r" + std::to_string(j + 1) + "=0");
        rec.y.push_back(detail::parse_double(cells[c], row, c));
      }
    }
    for (std::size_t k = 0; k < shape.K; ++k, ++c)
      rec.w.push_back(detail::parse_binary(cells[c], row, c));
    for (std::size_t l = 0; l < shape.L; ++l, ++c)
      rec.p.push_back(detail::parse_binary(cells[c], row, c));
    data.patients.push_back(std::move(rec));
  }
  data.validate();
  return data;
}

inline Dataset read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open dataset: " + path);
  return read_dataset(in, path);
}

inline void write_dataset(std::ostream& out, const Dataset& data) {
  const ModelShape& s = data.shape;
  std::string header;
  auto add_cols = [&](const char* prefix, std::size_t n) {
    for (std::size_t i = 1; i <= n; ++i) {
      if (!header.empty()) header += ',';
      header += prefix + std::to_string(i);
    }
  };
  add_cols("x", s.M);
  add_cols("r", s.J);
  add_cols("y", s.J);
  add_cols("w", s.K);
  add_cols("p", s.L);
  out << header << '\n';
  for (const PatientRecord& rec : data.patients) {
    std::string line;
    auto push = [&](const std::string& cell) {
      if (!line.empty()) line += ',';
      line += cell;
    };
    for (double v : rec.x) push(format_g17(v));
    for (auto v : rec.r) push(v ? "1" : "0");
    for (std::size_t j = 0; j < s.J; ++j) push(rec.r[j] ? format_g17(rec.y[j]) : "");
    for (auto v : rec.w) push(v ? "1" : "0");
    for (auto v : rec.p) push(v ? "1" : "0");
    out << line << '\n';
  }
}

inline void write_dataset_file(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write dataset: " + path);
  write_dataset(out, data);
}

// Z-scores biomarker values in place (observed entries only) and records the
// transform so reports can restate results in original units. Biomarkers
// with no observed values or zero spread keep the identity scale.
inline void standardize_biomarkers(Dataset& data) {
  if (data.standardized) return;
  const std::size_t J = data.shape.J;
  data.y_scale.assign(J, BiomarkerScale{});
  for (std::size_t j = 0; j < J; ++j) {
    double sum = 0.0, sum2 = 0.0;
    std::size_t n = 0;
    for (const auto& rec : data.patients)
      if (rec.r[j]) {
        sum += rec.y[j];
        sum2 += rec.y[j] * rec.y[j];
        ++n;
      }
    if (n < 2) continue;
    const double m = sum / static_cast<double>(n);
    const double var = (sum2 - sum * m) / static_cast<double>(n - 1);
    if (!(var > 0.0)) continue;
    const double sd = std::sqrt(var);
    data.y_scale[j] = {m, sd};
    for (auto& rec : data.patients)
      if (rec.r[j]) rec.y[j] = (rec.y[j] - m) / sd;
  }
  data.standardized = true;
}

}  // namespace phenlca

#endif
