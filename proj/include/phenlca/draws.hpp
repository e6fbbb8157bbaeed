#ifndef PHENLCA_DRAWS_HPP
#define PHENLCA_DRAWS_HPP

#include <span>
#include <string>
#include <vector>

namespace phenlca {

// Posterior draws in constrained space with canonical column naming; the
// diagnostics treat Gibbs chains and VB samples identically through this.
struct DrawMatrix {
  std::vector<std::string> names;
  std::size_t rows = 0;
  std::vector<double> data;  // rows x names.size(), row major

  std::size_t cols() const { return names.size(); }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data.data() + r * cols(), cols());
  }

  // one parameter column across all rows
  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
    return out;
  }
};

}  // namespace phenlca

#endif
