#pragma once

// Dense symmetric linear algebra: symmetric matrices and pencils, Cholesky,
// cyclic Jacobi eigensolver, generalized eigenproblems by whitening, and
// principal-submatrix restriction.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "rifle/error.hpp"

namespace rifle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kAsymmetryTolerance = 1e-12;

/// Dense symmetric matrix. Input is symmetrized as (M + M^T)/2; asymmetric()
/// reports whether that changed any entry by more than 1e-12.
class SymMatrix {
 public:
  SymMatrix() = default;

  explicit SymMatrix(const Matrix& m) {
    if (m.rows() != m.cols())
      throw Error(Errc::DimMismatch, "matrix is " + std::to_string(m.rows()) + "x" +
                                         std::to_string(m.cols()) + ", expected square");
    if (m.rows() == 0) throw Error(Errc::InvalidArgument, "matrix dimension must be positive");
    if (!m.allFinite()) throw Error(Errc::InvalidArgument, "matrix has non-finite entries");
    data_ = 0.5 * (m + m.transpose());
    asymmetric_ = ((m - data_).cwiseAbs().maxCoeff() > kAsymmetryTolerance);
  }

  SymMatrix(std::initializer_list<std::initializer_list<double>> rows)
      : SymMatrix(from_rows(rows)) {}

  static SymMatrix identity(std::size_t d) { return SymMatrix(Matrix::Identity(idx(d), idx(d))); }
  static SymMatrix zero(std::size_t d) { return SymMatrix(Matrix::Zero(idx(d), idx(d))); }
  static SymMatrix diagonal(const Vector& diag) { return SymMatrix(Matrix(diag.asDiagonal())); }

  std::size_t dim() const { return static_cast<std::size_t>(data_.rows()); }
  double operator()(std::size_t i, std::size_t j) const { return data_(idx(i), idx(j)); }
  const Matrix& matrix() const { return data_; }
  bool asymmetric() const { return asymmetric_; }

  double frobenius_norm() const { return data_.norm(); }
  double trace() const { return data_.trace(); }

  friend SymMatrix operator+(const SymMatrix& x, const SymMatrix& y) {
    check_same_dim(x, y);
    return SymMatrix(Matrix(x.data_ + y.data_));
  }
  friend SymMatrix operator-(const SymMatrix& x, const SymMatrix& y) {
    check_same_dim(x, y);
    return SymMatrix(Matrix(x.data_ - y.data_));
  }
  friend SymMatrix operator*(double c, const SymMatrix& x) { return SymMatrix(Matrix(c * x.data_)); }

 private:
  static Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix m(n, n);
    Eigen::Index i = 0;
    for (const auto& row : rows) {
      if (static_cast<Eigen::Index>(row.size()) != n)
        throw Error(Errc::DimMismatch, "ragged initializer row " + std::to_string(i));
      Eigen::Index j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  static void check_same_dim(const SymMatrix& x, const SymMatrix& y) {
    if (x.dim() != y.dim()) throw Error(Errc::DimMismatch, "symmetric matrices of different dimension");
  }

  Matrix data_;
  bool asymmetric_ = false;
};

/// Symmetric-definite pencil (A, B).
struct MatrixPair {
  SymMatrix a;
  SymMatrix b;

  MatrixPair(SymMatrix a_, SymMatrix b_) : a(std::move(a_)), b(std::move(b_)) {
    if (a.dim() != b.dim())
      throw Error(Errc::DimMismatch, "pair dimensions differ: " + std::to_string(a.dim()) + " vs " +
                                         std::to_string(b.dim()));
  }

  std::size_t dim() const { return a.dim(); }
};

/// Strictly increasing set of 0-based coordinates.
class IndexSet {
 public:
  IndexSet() = default;

  explicit IndexSet(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
    for (std::size_t i = 1; i < indices_.size(); ++i)
      if (indices_[i] <= indices_[i - 1])
        throw Error(Errc::InvalidArgument, "index set must be strictly increasing");
  }

  IndexSet(std::initializer_list<std::size_t> indices)
      : IndexSet(std::vector<std::size_t>(indices)) {}

  static IndexSet from_unsorted(std::vector<std::size_t> indices) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    return IndexSet(std::move(indices));
  }

  static IndexSet all(std::size_t d) {
    std::vector<std::size_t> v(d);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return IndexSet(std::move(v));
  }

  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  std::size_t operator[](std::size_t i) const { return indices_[i]; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }
  const std::vector<std::size_t>& indices() const { return indices_; }

  bool contains(std::size_t i) const { return std::binary_search(indices_.begin(), indices_.end(), i); }

  bool is_subset_of(const IndexSet& other) const {
    return std::includes(other.indices_.begin(), other.indices_.end(), indices_.begin(), indices_.end());
  }

  void check_within(std::size_t dim) const {
    if (!indices_.empty() && indices_.back() >= dim)
      throw Error(Errc::IndexOutOfRange, "index " + std::to_string(indices_.back()) +
                                             " out of range for dimension " + std::to_string(dim));
  }

  friend bool operator==(const IndexSet&, const IndexSet&) = default;

 private:
  std::vector<std::size_t> indices_;
};

/// Eigenvalues sorted descending, eigenvectors as matching orthonormal columns.
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  std::size_t size() const { return static_cast<std::size_t>(eigenvalues.size()); }
  double max() const { return eigenvalues(0); }
  double min() const { return eigenvalues(eigenvalues.size() - 1); }
};

struct CholeskyFactor {
  Matrix lower;

  std::size_t dim() const { return static_cast<std::size_t>(lower.rows()); }

  /// Solves L y = rhs.
  Matrix solve_lower(const Matrix& rhs) const { return lower.triangularView<Eigen::Lower>().solve(rhs); }
  /// Solves L^T x = rhs.
  Matrix solve_upper(const Matrix& rhs) const {
    return lower.transpose().triangularView<Eigen::Upper>().solve(rhs);
  }
  /// Solves (L L^T) x = rhs.
  Vector solve(const Vector& rhs) const { return solve_upper(solve_lower(rhs)); }
};

inline constexpr double kCholeskyPivotTolerance = 1e-12;

/// Pivots at or below 1e-12 * max diagonal are treated as numerically singular.
inline CholeskyFactor cholesky(const SymMatrix& m) {
  const Matrix& a = m.matrix();
  const Eigen::Index n = a.rows();
  const double max_diag = a.diagonal().maxCoeff();
  if (!(max_diag > 0.0)) throw Error(Errc::NotPositiveDefinite, "non-positive diagonal");
  const double tol = kCholeskyPivotTolerance * max_diag;

  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double pivot = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(pivot > tol))
      throw Error(Errc::NotPositiveDefinite, "pivot " + std::to_string(j) + " is " + std::to_string(pivot));
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    const Eigen::Index rest = n - j - 1;
    if (rest > 0) {
      l.col(j).tail(rest) =
          (a.col(j).tail(rest) - l.block(j + 1, 0, rest, j) * l.row(j).head(j).transpose()) / ljj;
    }
  }
  return CholeskyFactor{std::move(l)};
}

inline constexpr int kJacobiMaxSweeps = 100;
inline constexpr double kJacobiTolerance = 1e-12;

namespace detail {

inline double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

inline EigenDecomposition sorted_descending(const Vector& values, const Matrix& vectors) {
  const auto n = static_cast<std::size_t>(values.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return values(x) > values(y); });
  EigenDecomposition out{Vector(values.size()), Matrix(vectors.rows(), vectors.cols())};
  for (std::size_t k = 0; k < n; ++k) {
    const auto src = static_cast<Eigen::Index>(order[k]);
    out.eigenvalues(k) = values(src);
    out.eigenvectors.col(k) = vectors.col(src);
  }
  return out;
}

}  // namespace detail

/// Cyclic Jacobi eigensolver with row-by-row sweep order.
inline EigenDecomposition sym_eig(const SymMatrix& m) {
  Matrix a = m.matrix();
  const Eigen::Index n = a.rows();
  Matrix v = Matrix::Identity(n, n);
  const double target = kJacobiTolerance * m.frobenius_norm();

  bool converged = false;
  for (int sweep = 0; sweep <= kJacobiMaxSweeps; ++sweep) {
    if (detail::off_diagonal_norm(a) <= target) {
      converged = true;
      break;
    }
    if (sweep == kJacobiMaxSweeps) break;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged)
    throw Error(Errc::NoConvergence, "Jacobi sweeps exhausted after " + std::to_string(kJacobiMaxSweeps));
  return detail::sorted_descending(a.diagonal(), v);
}

/// Generalized eigenpairs of (A, B) via whitening with the Cholesky factor of B.
/// Returned vectors w satisfy A w = lambda B w and w^T B w = 1.
inline EigenDecomposition gen_eig(const MatrixPair& pair) {
  const CholeskyFactor chol = cholesky(pair.b);
  const Matrix left = chol.solve_lower(pair.a.matrix());
  const Matrix whitened = chol.solve_lower(left.transpose());
  EigenDecomposition eig = sym_eig(SymMatrix(whitened));
  eig.eigenvectors = chol.solve_upper(eig.eigenvectors);
  return eig;
}

inline double quadratic_form(const SymMatrix& m, const Vector& v) {
  if (static_cast<std::size_t>(v.size()) != m.dim())
    throw Error(Errc::DimMismatch, "vector of length " + std::to_string(v.size()) + " for matrix of dimension " +
                                       std::to_string(m.dim()));
  return v.dot(m.matrix() * v);
}

/// Principal submatrix on the coordinates of f, in index order.
inline SymMatrix restrict(const SymMatrix& m, const IndexSet& f) {
  f.check_within(m.dim());
  const auto s = static_cast<Eigen::Index>(f.size());
  Matrix sub(s, s);
  for (Eigen::Index j = 0; j < s; ++j)
    for (Eigen::Index i = 0; i < s; ++i)
      sub(i, j) = m.matrix()(static_cast<Eigen::Index>(f[static_cast<std::size_t>(i)]),
                             static_cast<Eigen::Index>(f[static_cast<std::size_t>(j)]));
  return SymMatrix(sub);
}

inline MatrixPair restrict(const MatrixPair& pair, const IndexSet& f) {
  return MatrixPair(restrict(pair.a, f), restrict(pair.b, f));
}

inline Vector restrict(const Vector& v, const IndexSet& f) {
  f.check_within(static_cast<std::size_t>(v.size()));
  Vector out(static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(f[i]));
  return out;
}

/// Places the entries of a restricted vector back into a zero d-vector.
inline Vector embed(const Vector& restricted, const IndexSet& f, std::size_t d) {
  if (static_cast<std::size_t>(restricted.size()) != f.size())
    throw Error(Errc::DimMismatch, "restricted vector length does not match index set");
  f.check_within(d);
  Vector out = Vector::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < f.size(); ++i)
    out(static_cast<Eigen::Index>(f[i])) = restricted(static_cast<Eigen::Index>(i));
  return out;
}

inline IndexSet support_of(const Vector& v) {
  std::vector<std::size_t> idx;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) != 0.0) idx.push_back(static_cast<std::size_t>(i));
  return IndexSet(std::move(idx));
}

inline double spectral_norm(const SymMatrix& m) {
  const EigenDecomposition eig = sym_eig(m);
  return std::max(std::abs(eig.max()), std::abs(eig.min()));
}

/// Condition number lambda_max / lambda_min of a positive definite matrix.
inline double condition_number(const SymMatrix& m) {
  const EigenDecomposition eig = sym_eig(m);
  if (!(eig.min() > 0.0)) throw Error(Errc::NotPositiveDefinite, "condition number of a non-PD matrix");
  return eig.max() / eig.min();
}

}  // namespace rifle
