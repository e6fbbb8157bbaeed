#ifndef PHENLCA_ERRORS_HPP
#define PHENLCA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace phenlca {

// Dimension or layout mismatch between data, parameters, and shape.
struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed external input (CSV cell, JSON field, header).
struct parse_error : std::runtime_error {
  explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values (bounds, probabilities, infeasible targets).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite intermediate or diverging optimization.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Diagnostics preconditions (too few draws, empty tails).
struct diag_error : std::runtime_error {
  explicit diag_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem problems, reported with the offending path.
struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace phenlca

#endif
