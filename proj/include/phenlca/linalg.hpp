#ifndef PHENLCA_LINALG_HPP
#define PHENLCA_LINALG_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "phenlca/errors.hpp"
#include "phenlca/math.hpp"

namespace phenlca {

// Small dense square matrix, row major. Used for prior covariances only;
// dimensions are M+2 at most, so no heavy linear algebra is needed.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, double diag = 0.0) : n_(n), a_(n * n, 0.0) {
    for (std::size_t i = 0; i < n; ++i) (*this)(i, i) = diag;
  }

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  std::span<const double> data() const { return a_; }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
class Cholesky {
 public:
  Cholesky() = default;

  explicit Cholesky(const Matrix& a) : n_(a.size()), l_(n_ * n_, 0.0) {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        if (i == j) {
          if (s <= 0.0)
            throw config_error("covariance matrix is not positive definite");
          l_[i * n_ + j] = std::sqrt(s);
        } else {
          l_[i * n_ + j] = s / l(j, j);
        }
      }
    }
  }

  std::size_t size() const { return n_; }
  double l(std::size_t i, std::size_t j) const { return l_[i * n_ + j]; }

  double log_det() const {  // of the original matrix
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += std::log(l(i, i));
    return 2.0 * s;
  }

  // Solves A x = b.
  std::vector<double> solve(std::span<const double> b) const {
    std::vector<double> y(n_);
    for (std::size_t i = 0; i < n_; ++i) {  // forward: L y = b
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
      y[i] = s / l(i, i);
    }
    for (std::size_t ii = n_; ii-- > 0;) {  // backward: L^T x = y
      double s = y[ii];
      for (std::size_t k = ii + 1; k < n_; ++k) s -= l(k, ii) * y[k];
      y[ii] = s / l(ii, ii);
    }
    return y;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> l_;
};

// Multivariate normal log density; `chol` factors the covariance.
inline double mvn_lpdf(std::span<const double> x, std::span<const double> mean,
                       const Cholesky& chol) {
  const std::size_t n = chol.size();
  if (x.size() != n || mean.size() != n)
    throw shape_error("mvn_lpdf: dimension mismatch");
  if (n == 0) return 0.0;
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = x[i] - mean[i];
  const std::vector<double> sol = chol.solve(diff);
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) quad += diff[i] * sol[i];
  return -0.5 * (static_cast<double>(n) * log_two_pi + chol.log_det() + quad);
}

// Gradient of mvn_lpdf with respect to x: -Sigma^{-1}(x - mean).
inline void mvn_lpdf_grad(std::span<const double> x, std::span<const double> mean,
                          const Cholesky& chol, std::span<double> grad_out) {
  const std::size_t n = chol.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = x[i] - mean[i];
  const std::vector<double> sol = chol.solve(diff);
  for (std::size_t i = 0; i < n; ++i) grad_out[i] = -sol[i];
}

}  // namespace phenlca

#endif
