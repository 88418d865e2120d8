#ifndef RXTRIAGE_LINALG_HPP
#define RXTRIAGE_LINALG_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace rxtriage {

/// Dense square matrix, row-major. Band counts are small (n <= ~10), so no
/// blocking or SIMD is attempted.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), a_(n * n, fill) {}

  static SquareMatrix identity(std::size_t n) {
    SquareMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t r, std::size_t c) { return a_[r * n_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a_[r * n_ + c]; }
  std::span<const double> row(std::size_t r) const { return {a_.data() + r * n_, n_}; }
  const std::vector<double>& values() const noexcept { return a_; }

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < n_; ++i) t += (*this)(i, i);
    return t;
  }

  SquareMatrix operator*(const SquareMatrix& rhs) const {
    SquareMatrix out(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t k = 0; k < n_; ++k) {
        const double lhs_ik = (*this)(i, k);
        for (std::size_t j = 0; j < n_; ++j) out(i, j) += lhs_ik * rhs(k, j);
      }
    return out;
  }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Only the lower triangle of the input is read.
class Cholesky {
 public:
  /// Returns nullopt when a pivot is non-positive or non-finite.
  static std::optional<Cholesky> factor(const SquareMatrix& a) {
    const std::size_t n = a.size();
    SquareMatrix l(n);
    for (std::size_t j = 0; j < n; ++j) {
      double diag = a(j, j);
      for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
      if (!(diag > 0.0) || !std::isfinite(diag)) return std::nullopt;
      const double ljj = std::sqrt(diag);
      l(j, j) = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        l(i, j) = s / ljj;
      }
    }
    return Cholesky(std::move(l));
  }

  /// Solves A x = b in place.
  void solve_in_place(std::span<double> b) const {
    const std::size_t n = l_.size();
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * b[k];
      b[i] = s / l_(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = b[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= l_(k, i) * b[k];
      b[i] = s / l_(i, i);
    }
  }

  /// A^-1, symmetrized by averaging mirrored entries so the result is
  /// exactly symmetric.
  SquareMatrix inverse() const {
    const std::size_t n = l_.size();
    SquareMatrix inv(n);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < n; ++j) {
      std::fill(col.begin(), col.end(), 0.0);
      col[j] = 1.0;
      solve_in_place(col);
      for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double avg = 0.5 * (inv(i, j) + inv(j, i));
        inv(i, j) = avg;
        inv(j, i) = avg;
      }
    return inv;
  }

  const SquareMatrix& lower() const noexcept { return l_; }

 private:
  explicit Cholesky(SquareMatrix l) : l_(std::move(l)) {}
  SquareMatrix l_;
};

}  // namespace rxtriage

#endif  // RXTRIAGE_LINALG_HPP
