#pragma once

// Seeded simulation scenarios: block AR(1) covariances, multivariate normal
// sampling, the binary / multiclass discriminant designs, the sparse CCA
// design, a sliced-regression design, and noiseless planted pencils.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rifle/linalg.hpp"
#include "rifle/random.hpp"
#include "rifle/stat_models.hpp"

namespace rifle {

inline constexpr double kSupportThreshold = 1e-10;

/// Block-diagonal covariance with rho^|j-j'| inside each of block_count blocks.
inline SymMatrix block_ar_cov(std::size_t d, std::size_t block_count = 5, double rho = 0.7) {
  if (d == 0 || block_count == 0) throw Error(Errc::InvalidArgument, "dimension and block count must be positive");
  if (d % block_count != 0)
    throw Error(Errc::Indivisible, std::to_string(block_count) + " blocks do not divide d = " + std::to_string(d));
  const auto size = static_cast<Eigen::Index>(d / block_count);
  const auto n = static_cast<Eigen::Index>(d);
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index start = 0; start < n; start += size)
    for (Eigen::Index i = 0; i < size; ++i)
      for (Eigen::Index j = 0; j < size; ++j)
        m(start + i, start + j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
  return SymMatrix(m);
}

/// n rows drawn iid from N(mean, L L^T).
inline Matrix sample_mvn(RngState& rng, const Vector& mean, const CholeskyFactor& chol, std::size_t n) {
  const auto d = static_cast<Eigen::Index>(chol.dim());
  if (mean.size() != d) throw Error(Errc::DimMismatch, "mean length differs from covariance dimension");
  Matrix z(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal();
  Matrix x = z * chol.lower.transpose();
  x.rowwise() += mean.transpose();
  return x;
}

inline Matrix sample_mvn(RngState& rng, const Vector& mean, const SymMatrix& cov, std::size_t n) {
  return sample_mvn(rng, mean, cholesky(cov), n);
}

inline IndexSet thresholded_support(const Vector& v, double threshold = kSupportThreshold) {
  std::vector<std::size_t> idx;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > threshold) idx.push_back(static_cast<std::size_t>(i));
  return IndexSet(std::move(idx));
}

struct FDAPopulation {
  std::vector<Vector> means;
  SymMatrix sigma;    // within-class covariance
  SymMatrix sigma_b;  // (1/K) sum_k mu_k mu_k^T for balanced classes
  Vector v_star;      // unit-norm leading generalized eigenvector of (sigma_b, sigma)
  IndexSet support;   // entries of v_star above 1e-10
  CholeskyFactor chol;

  int num_classes() const { return static_cast<int>(means.size()); }
};

struct ScenarioFDA {
  LabeledDataset data;
  FDAPopulation population;
};

namespace detail {

inline void check_fda_dims(std::size_t d) {
  if (d < 41) throw Error(Errc::TooSmall, "discriminant designs need d >= 41, got " + std::to_string(d));
  if (d % 5 != 0) throw Error(Errc::Indivisible, "d must be divisible by 5, got " + std::to_string(d));
}

/// Mean pattern: value 1 at 1-based coordinates 2, 4, ..., 40.
inline Vector even_coordinate_pattern(std::size_t d) {
  Vector p = Vector::Zero(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 1; j < 40; j += 2) p(j) = 1.0;
  return p;
}

// All class means are multiples of one pattern, so sigma_b is rank one and
// the discriminant direction is proportional to sigma^{-1} pattern.
inline FDAPopulation collinear_population(std::size_t d, const std::vector<double>& scales) {
  check_fda_dims(d);
  FDAPopulation pop;
  pop.sigma = block_ar_cov(d);
  pop.chol = cholesky(pop.sigma);
  const Vector pattern = even_coordinate_pattern(d);
  Matrix sb = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (double scale : scales) {
    pop.means.push_back(scale * pattern);
    sb += (scale * scale / static_cast<double>(scales.size())) * pattern * pattern.transpose();
  }
  pop.sigma_b = SymMatrix(sb);
  Vector v = pop.chol.solve(pattern);
  pop.v_star = v / v.norm();
  pop.support = thresholded_support(pop.v_star);
  return pop;
}

}  // namespace detail

/// Class 1 mean zero; class 2 mean 0.5 on 1-based coordinates 2, 4, ..., 40.
inline FDAPopulation fda_population_binary(std::size_t d) { return detail::collinear_population(d, {0.0, 0.5}); }

/// Four classes with means (k-1)/3 on 1-based coordinates 2, 4, ..., 40.
inline FDAPopulation fda_population_multiclass(std::size_t d) {
  return detail::collinear_population(d, {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0});
}

/// n_per_class rows per class, grouped by class in label order.
inline LabeledDataset sample_labeled(const FDAPopulation& pop, std::size_t n_per_class, RngState& rng) {
  const auto d = static_cast<Eigen::Index>(pop.sigma.dim());
  const auto k = static_cast<std::size_t>(pop.num_classes());
  Matrix x(static_cast<Eigen::Index>(n_per_class * k), d);
  std::vector<int> labels;
  labels.reserve(n_per_class * k);
  for (std::size_t c = 0; c < k; ++c) {
    x.middleRows(static_cast<Eigen::Index>(c * n_per_class), static_cast<Eigen::Index>(n_per_class)) =
        sample_mvn(rng, pop.means[c], pop.chol, n_per_class);
    labels.insert(labels.end(), n_per_class, static_cast<int>(c));
  }
  return LabeledDataset(std::move(x), std::move(labels), static_cast<int>(k));
}

inline ScenarioFDA gen_fda_binary(std::size_t d, std::size_t n_per_class, RngState& rng) {
  FDAPopulation pop = fda_population_binary(d);
  LabeledDataset data = sample_labeled(pop, n_per_class, rng);
  return ScenarioFDA{std::move(data), std::move(pop)};
}

inline ScenarioFDA gen_fda_multiclass(std::size_t d, std::size_t n_per_class, RngState& rng) {
  FDAPopulation pop = fda_population_multiclass(d);
  LabeledDataset data = sample_labeled(pop, n_per_class, rng);
  return ScenarioFDA{std::move(data), std::move(pop)};
}

struct CCAPopulation {
  SymMatrix sigma;  // joint covariance of (x, y)
  SymMatrix sigma_x;
  SymMatrix sigma_y;
  Vector vx_star;  // scaled so vx^T Sx vx = 1
  Vector vy_star;
  double lambda1 = 0.9;
  MatrixPair pair;  // population CCA pencil
  CholeskyFactor chol;

  std::size_t dx() const { return sigma_x.dim(); }
};

struct ScenarioCCA {
  PairedDataset data;
  CCAPopulation population;
};

inline constexpr double kCcaLambda = 0.9;

/// Sx = Sy = block AR(0.7); directions 1/sqrt(5) on 1-based coordinates
/// {1, 6, 11, 16, 21}, rescaled to unit Sigma-norm; Sxy = Sx vx lambda vy^T Sy.
inline CCAPopulation cca_population(std::size_t d, double lambda1 = kCcaLambda) {
  if (d % 2 != 0) throw Error(Errc::InvalidArgument, "CCA design needs even d");
  const std::size_t half = d / 2;
  if (half < 25) throw Error(Errc::TooSmall, "CCA design needs d/2 >= 25");
  if (half % 5 != 0) throw Error(Errc::Indivisible, "d/2 must be divisible by 5");
  const SymMatrix sx = block_ar_cov(half);
  const auto h = static_cast<Eigen::Index>(half);
  Vector v = Vector::Zero(h);
  for (Eigen::Index j : {0, 5, 10, 15, 20}) v(j) = 1.0 / std::sqrt(5.0);
  v /= std::sqrt(quadratic_form(sx, v));

  const Vector sv = sx.matrix() * v;
  const Matrix sxy = lambda1 * sv * sv.transpose();
  Matrix joint(2 * h, 2 * h);
  joint << sx.matrix(), sxy, sxy.transpose(), sx.matrix();
  Matrix a = Matrix::Zero(2 * h, 2 * h);
  a.block(0, h, h, h) = sxy;
  a.block(h, 0, h, h) = sxy.transpose();
  Matrix b = Matrix::Zero(2 * h, 2 * h);
  b.block(0, 0, h, h) = sx.matrix();
  b.block(h, h, h, h) = sx.matrix();

  SymMatrix sigma(joint);
  CholeskyFactor chol = cholesky(sigma);
  return CCAPopulation{std::move(sigma), sx,     sx, v, v, lambda1, MatrixPair(SymMatrix(a), SymMatrix(b)),
                       std::move(chol)};
}

inline PairedDataset sample_paired(const CCAPopulation& pop, std::size_t n, RngState& rng) {
  const auto h = static_cast<Eigen::Index>(pop.dx());
  const Matrix z = sample_mvn(rng, Vector::Zero(2 * h), pop.chol, n);
  return PairedDataset(z.leftCols(h), z.rightCols(h));
}

inline ScenarioCCA gen_cca(std::size_t d, std::size_t n, RngState& rng) {
  CCAPopulation pop = cca_population(d);
  PairedDataset data = sample_paired(pop, n, rng);
  return ScenarioCCA{std::move(data), std::move(pop)};
}

struct SIRPopulation {
  SymMatrix sigma;
  Vector beta;  // unit-norm index direction
  CholeskyFactor chol;
  double noise = 0.5;
};

/// y = beta^T x / sqrt(beta^T Sigma beta) + noise * e with Sigma block AR(0.7)
/// and beta equal on s coordinates spaced five apart (1-based 1, 6, 11, ...).
inline SIRPopulation sir_population(std::size_t d, std::size_t s) {
  if (s == 0 || 5 * (s - 1) >= d) throw Error(Errc::TooSmall, "SIR design needs d > 5(s-1)");
  SIRPopulation pop;
  pop.sigma = block_ar_cov(d, d % 5 == 0 ? 5 : 1);
  pop.chol = cholesky(pop.sigma);
  pop.beta = Vector::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < s; ++j) pop.beta(static_cast<Eigen::Index>(5 * j)) = 1.0;
  pop.beta.normalize();
  return pop;
}

inline SlicedDataset sample_sliced(const SIRPopulation& pop, std::size_t n, std::size_t slices, RngState& rng) {
  const auto d = static_cast<Eigen::Index>(pop.sigma.dim());
  Matrix x = sample_mvn(rng, Vector::Zero(d), pop.chol, n);
  const double scale = std::sqrt(quadratic_form(pop.sigma, pop.beta));
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i)
    y[i] = x.row(static_cast<Eigen::Index>(i)).dot(pop.beta) / scale + pop.noise * rng.normal();
  return SlicedDataset{std::move(x), std::move(y), slices};
}

struct PlantedGEP {
  MatrixPair pair;
  Vector w;  // unit-norm s-sparse leading generalized eigenvector
};

inline constexpr double kPlantedSecondRatio = 0.5;
inline constexpr std::size_t kPlantedNoiseRank = 5;

/// Noiseless pencil with a known sparse leading generalized eigenvector:
/// A = lambda1 (B w)(B w)^T / (w^T B w) + Q, where Q is PSD, Q w = 0 and the
/// largest generalized eigenvalue of (Q, B) equals 0.5 lambda1.
inline PlantedGEP gen_planted_gep(std::size_t d, std::size_t s, double lambda1, RngState& rng) {
  if (s == 0 || s > d) throw Error(Errc::InvalidArgument, "planted sparsity must lie in 1..d");
  if (!(lambda1 > 0.0)) throw Error(Errc::InvalidArgument, "planted eigenvalue must be positive");
  SymMatrix b = block_ar_cov(d, d % 5 == 0 ? 5 : 1);
  const auto n = static_cast<Eigen::Index>(d);

  Vector w = Vector::Zero(n);
  for (std::size_t j : rng.sample_without_replacement(d, s)) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    w(static_cast<Eigen::Index>(j)) = sign * (1.0 + std::abs(rng.normal()));
  }
  w.normalize();

  const Vector bw = b.matrix() * w;
  const double wbw = w.dot(bw);
  Matrix a = (lambda1 / wbw) * bw * bw.transpose();

  const std::size_t rank = std::min(kPlantedNoiseRank, d - 1);
  if (rank > 0) {
    Matrix g(n, static_cast<Eigen::Index>(rank));
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < n; ++i) g(i, j) = rng.normal();
    // B-orthogonal projection of the columns away from w.
    const Matrix m = g - w * (bw.transpose() * g) / wbw;
    const Matrix bm = b.matrix() * m;
    const double top = sym_eig(SymMatrix(Matrix(m.transpose() * bm))).max();
    if (top > 0.0) a += (kPlantedSecondRatio * lambda1 / top) * bm * bm.transpose();
  }
  return PlantedGEP{MatrixPair(SymMatrix(a), std::move(b)), std::move(w)};
}

/// Sample covariance with 1/n normalization.
inline SymMatrix sample_covariance(const Matrix& x) { return SymMatrix(detail::covariance(x)); }

}  // namespace rifle
