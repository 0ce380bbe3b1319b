#pragma once

// Exact small-scale solvers and perturbation diagnostics for sparse
// generalized eigenproblems: exhaustive support search, sparse spectral
// norms, Crawford numbers, eigengaps and the convergence-theory constants.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "rifle/linalg.hpp"

namespace rifle {

inline constexpr std::size_t kMaxOracleDim = 20;
inline constexpr double kMaxSupports = 2e5;
inline constexpr int kCrawfordGridPoints = 4096;

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(c);
}

/// Calls fn on every size-s subset of {0..d-1} in lexicographic order.
inline void for_each_support(std::size_t d, std::size_t s, const std::function<void(const IndexSet&)>& fn) {
  if (s > d) return;
  std::vector<std::size_t> idx(s);
  for (std::size_t i = 0; i < s; ++i) idx[i] = i;
  while (true) {
    fn(IndexSet(idx));
    if (s == 0) return;
    std::size_t i = s;
    while (i > 0 && idx[i - 1] == d - s + (i - 1)) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < s; ++j) idx[j] = idx[j - 1] + 1;
  }
}

inline void check_enumeration(std::size_t d, std::size_t s) {
  const double count = binomial(d, s);
  if (count > kMaxSupports)
    throw Error(Errc::TooLarge, "C(" + std::to_string(d) + "," + std::to_string(s) + ") = " +
                                    std::to_string(count) + " supports exceeds the enumeration cap");
}

struct SparseGEPSolution {
  Vector v;  // unit l2 norm
  IndexSet support;
  double lambda = 0.0;
  std::size_t skipped = 0;  // supports whose B block failed Cholesky
};

/// Global maximizer of the Rayleigh quotient over all size-s supports.
inline SparseGEPSolution exhaustive_sparse_gep(const MatrixPair& pair, std::size_t s) {
  const std::size_t d = pair.dim();
  if (s == 0 || s > d) throw Error(Errc::InvalidArgument, "support size " + std::to_string(s));
  if (d > kMaxOracleDim) throw Error(Errc::TooLarge, "exhaustive search limited to d <= 20");
  check_enumeration(d, s);

  SparseGEPSolution best;
  best.lambda = -std::numeric_limits<double>::infinity();
  bool found = false;
  for_each_support(d, s, [&](const IndexSet& f) {
    EigenDecomposition eig;
    try {
      eig = gen_eig(restrict(pair, f));
    } catch (const Error& e) {
      if (e.code() != Errc::NotPositiveDefinite) throw;
      ++best.skipped;
      return;
    }
    if (!found || eig.max() > best.lambda) {
      found = true;
      best.lambda = eig.max();
      best.support = f;
      best.v = embed(eig.eigenvectors.col(0), f, d);
    }
  });
  if (!found) throw Error(Errc::AllSupportsSingular, "no size-" + std::to_string(s) + " support has PD B block");
  best.v.normalize();
  return best;
}

/// rho(Z, s): largest |u^T Z u| over unit u with at most s nonzeros.
inline double sparse_spectral_norm(const SymMatrix& z, std::size_t s) {
  const std::size_t d = z.dim();
  if (s == 0) throw Error(Errc::InvalidArgument, "sparsity level must be positive");
  s = std::min(s, d);
  check_enumeration(d, s);
  double best = 0.0;
  for_each_support(d, s, [&](const IndexSet& f) {
    const EigenDecomposition eig = sym_eig(restrict(z, f));
    best = std::max({best, std::abs(eig.max()), std::abs(eig.min())});
  });
  return best;
}

namespace detail {

inline double crawford_profile(const MatrixPair& pair, double theta) {
  const SymMatrix m((std::cos(theta) * pair.a.matrix() + std::sin(theta) * pair.b.matrix()).eval());
  return sym_eig(m).min();
}

}  // namespace detail

/// Crawford number min_{|v|=1} sqrt((v^T A v)^2 + (v^T B v)^2), computed as
/// max over theta of lambda_min(cos(theta) A + sin(theta) B) on a 4096-point
/// grid followed by one Newton step. Returns 0 when the origin lies in the
/// joint numerical range. The grid value is a lower bound; the refinement
/// only replaces it when it improves.
inline double crawford_number(const MatrixPair& pair) {
  const double step = 2.0 * std::numbers::pi / kCrawfordGridPoints;
  double best = -std::numeric_limits<double>::infinity();
  double best_theta = 0.0;
  for (int i = 0; i < kCrawfordGridPoints; ++i) {
    const double theta = step * i;
    const double value = detail::crawford_profile(pair, theta);
    if (value > best) {
      best = value;
      best_theta = theta;
    }
  }

  // Newton step on f(theta) = lambda_min(M(theta)) using first and second
  // order eigenvalue perturbation; M'' = -M.
  const Matrix a = pair.a.matrix();
  const Matrix b = pair.b.matrix();
  const double c = std::cos(best_theta);
  const double s = std::sin(best_theta);
  const EigenDecomposition eig = sym_eig(SymMatrix((c * a + s * b).eval()));
  const Eigen::Index last = static_cast<Eigen::Index>(eig.size()) - 1;
  const Vector q = eig.eigenvectors.col(last);
  const Matrix deriv = -s * a + c * b;
  const Vector dq = deriv * q;
  const double f1 = q.dot(dq);
  double f2 = -eig.min();
  for (Eigen::Index j = 0; j < last; ++j) {
    const double gap = eig.min() - eig.eigenvalues(j);
    if (gap < 0.0) {
      const double coupling = eig.eigenvectors.col(j).dot(dq);
      f2 += 2.0 * coupling * coupling / gap;
    }
  }
  if (f2 < 0.0) {
    const double theta = best_theta - f1 / f2;
    if (std::abs(theta - best_theta) <= step) best = std::max(best, detail::crawford_profile(pair, theta));
  }
  return std::max(0.0, best);
}

/// cr(k'): minimum Crawford number over principal subpencils of size <= k'.
/// Enlarging a support can only shrink the Crawford number, so the minimum
/// is attained at size min(k', d).
inline double cr_inf(const MatrixPair& pair, std::size_t k_prime) {
  const std::size_t d = pair.dim();
  if (k_prime == 0) throw Error(Errc::InvalidArgument, "k' must be positive");
  const std::size_t size = std::min(k_prime, d);
  check_enumeration(d, size);
  double best = std::numeric_limits<double>::infinity();
  for_each_support(d, size, [&](const IndexSet& f) { best = std::min(best, crawford_number(restrict(pair, f))); });
  return best;
}

/// eps(k') = sqrt(rho(E_A, k')^2 + rho(E_B, k')^2).
inline double epsilon_k(const SymMatrix& e_a, const SymMatrix& e_b, std::size_t k_prime) {
  if (e_a.dim() != e_b.dim()) throw Error(Errc::DimMismatch, "perturbations differ in dimension");
  return std::hypot(sparse_spectral_norm(e_a, k_prime), sparse_spectral_norm(e_b, k_prime));
}

/// Normalized eigengap min_{j>1} (l1 - (1+a) lj) / (sqrt(1+l1^2) sqrt(1+(1-a)^2 lj^2)).
inline double eigengap(const MatrixPair& pair, double a) {
  if (!(a >= 0.0 && a < 1.0)) throw Error(Errc::InvalidArgument, "constant a must lie in [0,1)");
  if (pair.dim() < 2) throw Error(Errc::InvalidArgument, "eigengap needs dimension >= 2");
  const EigenDecomposition eig = gen_eig(pair);
  const double l1 = eig.eigenvalues(0);
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 1; j < eig.eigenvalues.size(); ++j) {
    const double lj = eig.eigenvalues(j);
    const double value = (l1 - (1.0 + a) * lj) /
                         (std::sqrt(1.0 + l1 * l1) * std::sqrt(1.0 + (1.0 - a) * (1.0 - a) * lj * lj));
    gap = std::min(gap, value);
  }
  return gap;
}

struct TheoremQuantities {
  std::size_t s = 0;
  std::size_t k = 0;
  std::size_t k_prime = 0;  // 2k + s
  double eta = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double cr_k = 0.0;         // cr(k')
  double eps_k = 0.0;        // eps(k')
  double delta_lambda = 0.0; // eigengap
  double gamma = 0.0;
  double omega_k = 0.0;      // 2 eps / (delta_lambda cr)
  double theta = 0.0;
  double nu = 0.0;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double c_lower = 0.0;
  double c_upper = 0.0;
  double kappa_b = 0.0;
  double lambda_max_b = 0.0;
  double lambda_min_b = 0.0;
  bool gap_violated = false;  // delta_lambda <= eps / cr
};

struct TheoremConstants {
  double a = 0.05;
  double b = 0.0;
  double c = 0.05;
};

/// Evaluates the constants of the linear-convergence theorem for a
/// population pencil and a perturbation (E_A, E_B). A violated gap
/// hypothesis is reported through gap_violated, not thrown.
inline TheoremQuantities theorem1_quantities(const MatrixPair& pair, const SymMatrix& e_a, const SymMatrix& e_b,
                                             std::size_t s, std::size_t k, double eta,
                                             TheoremConstants constants = {}) {
  const double a = constants.a;
  const double c = constants.c;
  if (!(a >= 0.0 && a < 1.0) || !(c >= 0.0 && c < 1.0))
    throw Error(Errc::InvalidArgument, "constants a and c must lie in [0,1)");
  if (s == 0 || k == 0) throw Error(Errc::InvalidArgument, "s and k must be positive");
  if (!(eta > 0.0)) throw Error(Errc::InvalidArgument, "step size must be positive");
  if (e_a.dim() != pair.dim() || e_b.dim() != pair.dim())
    throw Error(Errc::DimMismatch, "perturbation dimension does not match pair");

  TheoremQuantities q;
  q.s = s;
  q.k = k;
  q.k_prime = 2 * k + s;
  q.eta = eta;
  q.a = a;
  q.b = constants.b;
  q.c = c;

  const EigenDecomposition gen = gen_eig(pair);
  q.lambda1 = gen.eigenvalues(0);
  q.lambda2 = gen.size() > 1 ? gen.eigenvalues(1) : 0.0;

  const EigenDecomposition beig = sym_eig(pair.b);
  q.lambda_max_b = beig.max();
  q.lambda_min_b = beig.min();
  if (!(q.lambda_min_b > 0.0)) throw Error(Errc::NotPositiveDefinite, "B is not positive definite");
  q.kappa_b = q.lambda_max_b / q.lambda_min_b;

  q.cr_k = cr_inf(pair, q.k_prime);
  q.eps_k = epsilon_k(e_a, e_b, q.k_prime);
  q.delta_lambda = eigengap(pair, a);
  q.gamma = (1.0 + a) * q.lambda2 / ((1.0 - a) * q.lambda1);
  q.omega_k = 2.0 * q.eps_k / (q.delta_lambda * q.cr_k);
  q.c_lower = (1.0 - c) / (1.0 + c);
  q.c_upper = (1.0 + c) / (1.0 - c);
  q.gap_violated = !(q.delta_lambda > q.eps_k / q.cr_k);

  const double kappa = q.kappa_b;
  const double mixed = q.c_upper * kappa + q.gamma;
  q.theta = 1.0 - (1.0 - q.gamma) / (30.0 * (1.0 + c) * q.c_upper * q.c_upper * eta * q.lambda_max_b * kappa *
                                      kappa * mixed);
  const double ratio = static_cast<double>(s) / static_cast<double>(k);
  const double truncation_factor = std::sqrt(1.0 + 2.0 * (std::sqrt(ratio) + ratio));
  const double contraction =
      std::sqrt(1.0 - (1.0 + c) / 8.0 * eta * q.lambda_min_b * ((1.0 - q.gamma) / mixed));
  q.nu = truncation_factor * contraction;
  return q;
}

struct RestrictedGevec {
  Vector v;  // zero off F, v^T B v = 1
  Vector y;  // v / ||v||_2
  double lambda = 0.0;
};

namespace detail {

// Fixes the sign so the entry of largest magnitude (first on ties) is positive.
inline void canonical_sign(Vector& v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
  if (v.size() > 0 && v(arg) < 0.0) v = -v;
}

}  // namespace detail

/// Leading generalized eigenvector of (A_F, B_F), embedded back into R^d.
inline RestrictedGevec restricted_leading_gevec(const MatrixPair& pair, const IndexSet& f) {
  if (f.empty()) throw Error(Errc::InvalidArgument, "empty index set");
  const EigenDecomposition eig = gen_eig(restrict(pair, f));
  RestrictedGevec out;
  out.lambda = eig.max();
  out.v = embed(eig.eigenvectors.col(0), f, pair.dim());
  detail::canonical_sign(out.v);
  out.y = out.v / out.v.norm();
  return out;
}

/// Chordal distance |x - y| / (sqrt(1+x^2) sqrt(1+y^2)), the sine of the
/// angle between the points (x, 1) and (y, 1).
inline double chordal_distance(double x, double y) {
  return std::abs(x - y) / (std::sqrt(1.0 + x * x) * std::sqrt(1.0 + y * y));
}

struct Lemma3Terms {
  double delta = 0.0;     // sqrt(||E_A,F||^2 + ||E_B,F||^2)
  double gap = 0.0;       // min_{k>1} chi(lambda_1(F), hat lambda_k(F))
  double crawford = 0.0;  // cr(hat A_F, hat B_F)
  double bound = 0.0;     // delta / (gap * crawford)
  bool precondition = false;  // delta / gap < crawford
};

inline Lemma3Terms lemma3_terms(const MatrixPair& pair_true, const MatrixPair& pair_hat, const IndexSet& f) {
  if (pair_true.dim() != pair_hat.dim()) throw Error(Errc::DimMismatch, "true and estimated pairs differ in size");
  if (f.size() < 2) throw Error(Errc::InvalidArgument, "index set needs at least two coordinates");
  const MatrixPair truth = restrict(pair_true, f);
  const MatrixPair hat = restrict(pair_hat, f);

  Lemma3Terms t;
  t.delta = std::hypot(spectral_norm(hat.a - truth.a), spectral_norm(hat.b - truth.b));

  const double l1 = gen_eig(truth).max();
  const EigenDecomposition hat_eig = gen_eig(hat);
  t.gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 1; j < hat_eig.eigenvalues.size(); ++j) {
    t.gap = std::min(t.gap, chordal_distance(l1, hat_eig.eigenvalues(j)));
  }
  if (!(t.gap > 1e-13)) throw Error(Errc::ZeroGap, "restricted eigengap vanishes");
  t.crawford = crawford_number(hat);
  t.bound = t.delta / (t.gap * t.crawford);
  t.precondition = t.delta / t.gap < t.crawford;
  return t;
}

/// Perturbation bound delta(F) / (gap(F) * cr(hat A_F, hat B_F)) on the
/// leading restricted generalized eigenvector.
inline double lemma3_bound(const MatrixPair& pair_true, const MatrixPair& pair_hat, const IndexSet& f) {
  return lemma3_terms(pair_true, pair_hat, f).bound;
}

/// Interval containing the k-th perturbed generalized eigenvalue when the
/// perturbation size eps is below the Crawford number cr. An upper end of
/// +inf means the denominator cr - eps * lambda is not positive.
inline std::pair<double, double> perturbed_eigenvalue_interval(double lambda, double cr, double eps) {
  const double lo_den = cr + eps * lambda;
  const double hi_den = cr - eps * lambda;
  const double lo = lo_den > 0.0 ? (lambda * cr - eps) / lo_den : -std::numeric_limits<double>::infinity();
  const double hi = hi_den > 0.0 ? (lambda * cr + eps) / hi_den : std::numeric_limits<double>::infinity();
  return {lo, hi};
}

/// Lower bound on |Truncate(y, F)^T y'| for unit y, y' with |supp(y')| = kbar
/// and F the top-k set of y.
inline double truncation_lower_bound(double overlap, std::size_t kbar, std::size_t k) {
  const double r = std::sqrt(static_cast<double>(kbar) / static_cast<double>(k));
  const double sin2 = std::max(0.0, 1.0 - overlap * overlap);
  return std::abs(overlap) - r * std::min(std::sqrt(sin2), (1.0 + r) * sin2);
}

}  // namespace rifle
