#pragma once

// Reductions of sparse FDA, CCA and SIR to symmetric-definite pencils, plus
// the downstream metrics used to evaluate fitted directions.
//
// All covariance estimates use the 1/n normalization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rifle/linalg.hpp"

namespace rifle {

/// Rows of x are samples; labels are class ids in 0..num_classes-1.
struct LabeledDataset {
  Matrix x;
  std::vector<int> labels;
  int num_classes = 0;

  LabeledDataset() = default;
  LabeledDataset(Matrix x_, std::vector<int> labels_, int num_classes_ = -1)
      : x(std::move(x_)), labels(std::move(labels_)), num_classes(num_classes_) {
    if (static_cast<std::size_t>(x.rows()) != labels.size())
      throw Error(Errc::DimMismatch, "label count differs from sample count");
    for (int l : labels)
      if (l < 0) throw Error(Errc::InvalidArgument, "negative class label");
    if (num_classes < 0)
      num_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    for (int l : labels)
      if (l >= num_classes) throw Error(Errc::InvalidArgument, "label exceeds class count");
  }

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(x.cols()); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    return counts;
  }

  LabeledDataset subset(const std::vector<std::size_t>& rows) const {
    Matrix sub(static_cast<Eigen::Index>(rows.size()), x.cols());
    std::vector<int> sub_labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      sub.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
      sub_labels[i] = labels[rows[i]];
    }
    return LabeledDataset(std::move(sub), std::move(sub_labels), num_classes);
  }
};

struct PairedDataset {
  Matrix x;
  Matrix y;

  PairedDataset() = default;
  PairedDataset(Matrix x_, Matrix y_) : x(std::move(x_)), y(std::move(y_)) {
    if (x.rows() != y.rows()) throw Error(Errc::DimMismatch, "x and y have different sample counts");
  }

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }

  PairedDataset subset(const std::vector<std::size_t>& rows) const {
    Matrix sx(static_cast<Eigen::Index>(rows.size()), x.cols());
    Matrix sy(static_cast<Eigen::Index>(rows.size()), y.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      sx.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
      sy.row(static_cast<Eigen::Index>(i)) = y.row(static_cast<Eigen::Index>(rows[i]));
    }
    return PairedDataset(std::move(sx), std::move(sy));
  }
};

/// Response is either categorical (each label is a slice) or continuous
/// (cut into `slices` equal-count slices by rank).
struct SlicedDataset {
  Matrix x;
  std::variant<std::vector<int>, std::vector<double>> response;
  std::size_t slices = 2;

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
};

enum class ProblemKind { Fda, Cca, Sir, Custom };

struct GEPMeta {
  ProblemKind kind = ProblemKind::Custom;
  std::size_t dx = 0;  // CCA block sizes
  std::size_t dy = 0;
  bool diagonal_within = false;
};

struct GEPProblem {
  MatrixPair pair;
  GEPMeta meta;
};

namespace detail {

inline Matrix centered(const Matrix& x) {
  if (x.rows() == 0) return x;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return x.rowwise() - mean;
}

inline Matrix covariance(const Matrix& x) {
  const Matrix c = centered(x);
  return (c.transpose() * c) / static_cast<double>(x.rows());
}

inline Matrix cross_covariance(const Matrix& x, const Matrix& y) {
  return (centered(x).transpose() * centered(y)) / static_cast<double>(x.rows());
}

}  // namespace detail

struct Scatter {
  SymMatrix within;   // (1/n) sum_k sum_{i in C_k} (x_i - mu_k)(x_i - mu_k)^T
  SymMatrix between;  // (1/n) sum_k n_k mu_k mu_k^T
};

/// Within- and between-class scatter; only requires every class to be nonempty.
inline Scatter fda_scatter(const Matrix& x, const std::vector<int>& labels, int num_classes) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (static_cast<std::size_t>(n) != labels.size()) throw Error(Errc::DimMismatch, "label count mismatch");
  if (n == 0 || d == 0) throw Error(Errc::InvalidArgument, "empty data matrix");
  Matrix sums = Matrix::Zero(num_classes, d);
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    sums.row(l) += x.row(i);
    counts[static_cast<std::size_t>(l)] += 1.0;
  }
  Matrix means(num_classes, d);
  Matrix between = Matrix::Zero(d, d);
  for (int k = 0; k < num_classes; ++k) {
    const double nk = counts[static_cast<std::size_t>(k)];
    if (nk == 0.0) throw Error(Errc::DegenerateClass, "class " + std::to_string(k) + " is empty");
    means.row(k) = sums.row(k) / nk;
    between.noalias() += nk * means.row(k).transpose() * means.row(k);
  }
  Matrix resid(n, d);
  for (Eigen::Index i = 0; i < n; ++i) resid.row(i) = x.row(i) - means.row(labels[static_cast<std::size_t>(i)]);
  const double inv_n = 1.0 / static_cast<double>(n);
  return Scatter{SymMatrix(Matrix(resid.transpose() * resid * inv_n)), SymMatrix(Matrix(between * inv_n))};
}

/// A = between-class scatter, B = within-class scatter (or its diagonal when
/// diagonal_within is set). Every class needs at least two samples.
inline GEPProblem fda_build(const LabeledDataset& data, bool diagonal_within = false) {
  if (data.num_classes < 2) throw Error(Errc::InvalidArgument, "need at least two classes");
  if (data.n() < static_cast<std::size_t>(data.num_classes))
    throw Error(Errc::InvalidArgument, "fewer samples than classes");
  const auto counts = data.class_counts();
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] < 2)
      throw Error(Errc::DegenerateClass, "class " + std::to_string(k) + " has " + std::to_string(counts[k]) +
                                             " samples");
  Scatter sc = fda_scatter(data.x, data.labels, data.num_classes);
  SymMatrix within = diagonal_within ? SymMatrix(Matrix(sc.within.matrix().diagonal().asDiagonal()))
                                     : std::move(sc.within);
  GEPMeta meta;
  meta.kind = ProblemKind::Fda;
  meta.diagonal_within = diagonal_within;
  return GEPProblem{MatrixPair(std::move(sc.between), std::move(within)), meta};
}

/// Projects onto v and assigns each test row the label of the nearest
/// projected training centroid; equidistant rows go to the smaller label.
inline std::vector<int> fda_classify(const Vector& v, const LabeledDataset& train, const Matrix& test_x) {
  if (!(v.norm() > 0.0)) throw Error(Errc::ZeroVector, "projection direction is zero");
  if (test_x.cols() != train.x.cols() || v.size() != train.x.cols())
    throw Error(Errc::DimMismatch, "feature dimensions differ");
  const Vector proj = train.x * v;
  std::vector<double> centroid(static_cast<std::size_t>(train.num_classes), 0.0);
  std::vector<double> count(centroid.size(), 0.0);
  for (std::size_t i = 0; i < train.labels.size(); ++i) {
    centroid[static_cast<std::size_t>(train.labels[i])] += proj(static_cast<Eigen::Index>(i));
    count[static_cast<std::size_t>(train.labels[i])] += 1.0;
  }
  for (std::size_t k = 0; k < centroid.size(); ++k)
    centroid[k] = count[k] > 0.0 ? centroid[k] / count[k] : std::numeric_limits<double>::quiet_NaN();

  const Vector test_proj = test_x * v;
  std::vector<int> out(static_cast<std::size_t>(test_x.rows()));
  for (Eigen::Index i = 0; i < test_proj.size(); ++i) {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroid.size(); ++k) {
      if (std::isnan(centroid[k])) continue;
      const double dist = std::abs(test_proj(i) - centroid[k]);
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<int>(k);
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

inline std::size_t count_mismatches(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw Error(Errc::DimMismatch, "label vectors differ in length");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) errors += predicted[i] != truth[i];
  return errors;
}

/// A = [[0, Sxy], [Syx, 0]], B = blockdiag(Sx, Sy) from mean-centered samples.
inline GEPProblem cca_build(const PairedDataset& data) {
  if (data.n() == 0) throw Error(Errc::InvalidArgument, "empty paired dataset");
  const auto dx = data.x.cols();
  const auto dy = data.y.cols();
  const Matrix sx = detail::covariance(data.x);
  const Matrix sy = detail::covariance(data.y);
  const Matrix sxy = detail::cross_covariance(data.x, data.y);
  Matrix a = Matrix::Zero(dx + dy, dx + dy);
  Matrix b = Matrix::Zero(dx + dy, dx + dy);
  a.block(0, dx, dx, dy) = sxy;
  a.block(dx, 0, dy, dx) = sxy.transpose();
  b.block(0, 0, dx, dx) = sx;
  b.block(dx, dx, dy, dy) = sy;
  GEPMeta meta;
  meta.kind = ProblemKind::Cca;
  meta.dx = static_cast<std::size_t>(dx);
  meta.dy = static_cast<std::size_t>(dy);
  return GEPProblem{MatrixPair(SymMatrix(a), SymMatrix(b)), meta};
}

struct CanonicalPair {
  Vector x;
  Vector y;
  bool x_zero = false;
  bool y_zero = false;
};

namespace detail {

inline bool unit_with_sign_convention(Vector& v) {
  const double norm = v.norm();
  if (!(norm > 0.0)) {
    v.setZero();
    return false;
  }
  v /= norm;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v(i) != 0.0) {
      if (v(i) < 0.0) v = -v;
      break;
    }
  }
  return true;
}

}  // namespace detail

/// Splits a stacked CCA vector into unit-norm halves whose first nonzero
/// coordinate is positive. An all-zero half is returned as zero and flagged.
inline CanonicalPair cca_split(const Vector& v, const GEPMeta& meta) {
  if (static_cast<std::size_t>(v.size()) != meta.dx + meta.dy)
    throw Error(Errc::DimMismatch, "vector length differs from dx + dy");
  CanonicalPair out;
  out.x = v.head(static_cast<Eigen::Index>(meta.dx));
  out.y = v.tail(static_cast<Eigen::Index>(meta.dy));
  out.x_zero = !detail::unit_with_sign_convention(out.x);
  out.y_zero = !detail::unit_with_sign_convention(out.y);
  return out;
}

/// Slice id per sample. Continuous responses are ranked (ties by sample
/// index) and cut into equal-count slices.
inline std::vector<std::size_t> assign_slices(const SlicedDataset& data) {
  const std::size_t n = data.n();
  std::vector<std::size_t> slice(n);
  if (const auto* labels = std::get_if<std::vector<int>>(&data.response)) {
    if (labels->size() != n) throw Error(Errc::DimMismatch, "response length differs from sample count");
    for (std::size_t i = 0; i < n; ++i) {
      if ((*labels)[i] < 0 || static_cast<std::size_t>((*labels)[i]) >= data.slices)
        throw Error(Errc::InvalidArgument, "categorical response outside 0..slices-1");
      slice[i] = static_cast<std::size_t>((*labels)[i]);
    }
  } else {
    const auto& y = std::get<std::vector<double>>(data.response);
    if (y.size() != n) throw Error(Errc::DimMismatch, "response length differs from sample count");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
    for (std::size_t r = 0; r < n; ++r) slice[order[r]] = r * data.slices / n;
  }
  return slice;
}

/// A = Sx - (1/n) sum_h n_h S_{x,h}, B = Sx.
inline GEPProblem sir_build(const SlicedDataset& data) {
  if (data.slices < 2) throw Error(Errc::InvalidArgument, "need at least two slices");
  if (data.n() == 0) throw Error(Errc::EmptySlice, "no samples");
  const std::vector<std::size_t> slice = assign_slices(data);
  const Matrix sx = detail::covariance(data.x);
  Matrix pooled = Matrix::Zero(data.x.cols(), data.x.cols());
  for (std::size_t h = 0; h < data.slices; ++h) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < slice.size(); ++i)
      if (slice[i] == h) rows.push_back(static_cast<Eigen::Index>(i));
    if (rows.empty()) throw Error(Errc::EmptySlice, "slice " + std::to_string(h) + " is empty");
    Matrix part(static_cast<Eigen::Index>(rows.size()), data.x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) part.row(static_cast<Eigen::Index>(r)) = data.x.row(rows[r]);
    pooled += static_cast<double>(rows.size()) * detail::covariance(part);
  }
  pooled /= static_cast<double>(data.n());
  GEPMeta meta;
  meta.kind = ProblemKind::Sir;
  return GEPProblem{MatrixPair(SymMatrix(Matrix(sx - pooled)), SymMatrix(sx)), meta};
}

/// min(||u - w||^2, ||u + w||^2) for the unit-normalized inputs; in [0, 2].
inline double direction_error(const Vector& v_hat, const Vector& v_star) {
  if (v_hat.size() != v_star.size()) throw Error(Errc::DimMismatch, "direction lengths differ");
  const double nh = v_hat.norm();
  const double ns = v_star.norm();
  if (!(nh > 0.0) || !(ns > 0.0)) throw Error(Errc::ZeroVector, "direction is zero");
  const Vector u = v_hat / nh;
  const Vector w = v_star / ns;
  return std::min((u - w).squaredNorm(), (u + w).squaredNorm());
}

}  // namespace rifle
