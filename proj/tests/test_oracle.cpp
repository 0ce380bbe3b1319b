#include <gtest/gtest.h>

#include <cmath>

#include "lemma_checks.hpp"
#include "rifle/oracle.hpp"
#include "test_util.hpp"

namespace rifle {
namespace {

using testing::random_definite_pair;
using testing::random_symmetric;
using testing::random_unit;

SymMatrix diag(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return SymMatrix::diagonal(v);
}

template <typename F>
void expect_error(Errc code, F&& fn) {
  try {
    fn();
    FAIL() << "expected " << errc_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

TEST(Binomial, SmallValues) {
  EXPECT_EQ(binomial(10, 2), 45.0);
  EXPECT_EQ(binomial(20, 10), 184756.0);
  EXPECT_EQ(binomial(3, 5), 0.0);
}

TEST(ForEachSupport, LexicographicAndComplete) {
  std::vector<IndexSet> seen;
  for_each_support(4, 2, [&](const IndexSet& f) { seen.push_back(f); });
  ASSERT_EQ(seen.size(), 6u);
  EXPECT_EQ(seen.front(), IndexSet({0, 1}));
  EXPECT_EQ(seen[2], IndexSet({0, 3}));
  EXPECT_EQ(seen.back(), IndexSet({2, 3}));
}

TEST(ExhaustiveSparseGEP, DiagonalExamples) {
  const SparseGEPSolution a = exhaustive_sparse_gep(MatrixPair(diag({5, 4, 1}), SymMatrix::identity(3)), 1);
  EXPECT_NEAR(a.lambda, 5.0, 1e-12);
  EXPECT_EQ(a.support, IndexSet({0}));
  EXPECT_NEAR(std::abs(a.v(0)), 1.0, 1e-12);

  const SparseGEPSolution b = exhaustive_sparse_gep(MatrixPair(diag({4, 9}), diag({1, 9})), 1);
  EXPECT_EQ(b.support, IndexSet({0}));
  EXPECT_NEAR(b.lambda, 4.0, 1e-12);
}

TEST(ExhaustiveSparseGEP, BeatsEverySupport) {
  RngState rng(31, 0);
  const MatrixPair p = random_definite_pair(rng, 10);
  const SparseGEPSolution sol = exhaustive_sparse_gep(p, 2);
  EXPECT_NEAR(sol.v.norm(), 1.0, 1e-12);
  EXPECT_EQ(sol.support.size(), 2u);
  int count = 0;
  for_each_support(10, 2, [&](const IndexSet& f) {
    ++count;
    EXPECT_GE(sol.lambda + 1e-12, gen_eig(restrict(p, f)).max());
  });
  EXPECT_EQ(count, 45);
  EXPECT_NEAR(rayleigh_quotient(p, sol.v), sol.lambda, 1e-10);

  const Vector vf = restrict(sol.v, sol.support);
  const MatrixPair pf = restrict(p, sol.support);
  EXPECT_LE((pf.a.matrix() * vf - sol.lambda * (pf.b.matrix() * vf)).norm(), 1e-8);
}

TEST(ExhaustiveSparseGEP, FullSupportMatchesGenEig) {
  RngState rng(32, 0);
  const MatrixPair p = random_definite_pair(rng, 7);
  EXPECT_NEAR(exhaustive_sparse_gep(p, 7).lambda, gen_eig(p).max(), 1e-9);
}

TEST(ExhaustiveSparseGEP, Errors) {
  RngState rng(33, 0);
  expect_error(Errc::TooLarge, [&] { exhaustive_sparse_gep(random_definite_pair(rng, 21), 2); });
  // every 1x1 block of B is zero
  expect_error(Errc::AllSupportsSingular,
               [] { exhaustive_sparse_gep(MatrixPair(SymMatrix::identity(2), SymMatrix{{0, 1}, {1, 0}}), 1); });
}

TEST(ExhaustiveSparseGEP, SkipsSingularBlocks) {
  const MatrixPair p(diag({3, 5, 1}), diag({1, 0, 1}));
  const SparseGEPSolution sol = exhaustive_sparse_gep(p, 1);
  EXPECT_EQ(sol.skipped, 1u);
  EXPECT_EQ(sol.support, IndexSet({0}));
}

TEST(SparseSpectralNorm, Examples) {
  EXPECT_NEAR(sparse_spectral_norm(diag({3, -4, 1}), 1), 4.0, 1e-12);
  EXPECT_NEAR(sparse_spectral_norm(diag({3, -4, 1}), 2), 4.0, 1e-12);
  const SymMatrix swap{{0, 1}, {1, 0}};
  EXPECT_NEAR(sparse_spectral_norm(swap, 2), 1.0, 1e-12);
  EXPECT_NEAR(sparse_spectral_norm(swap, 1), 0.0, 1e-12);
}

TEST(SparseSpectralNorm, MonotoneScalingAndFullSize) {
  RngState rng(34, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const SymMatrix z = random_symmetric(rng, 7);
    double prev = 0.0;
    for (std::size_t s = 1; s <= 7; ++s) {
      const double value = sparse_spectral_norm(z, s);
      EXPECT_GE(value, prev - 1e-12);
      prev = value;
    }
    EXPECT_NEAR(prev, spectral_norm(z), 1e-9);
    const double base = sparse_spectral_norm(z, 3);
    for (double c : {-3.0, 0.25, 7.0}) EXPECT_NEAR(sparse_spectral_norm(c * z, 3), std::abs(c) * base, 1e-12 * std::abs(c) * base);
  }
}

TEST(SparseSpectralNorm, EnumerationCap) {
  expect_error(Errc::TooLarge, [] { sparse_spectral_norm(SymMatrix::identity(40), 6); });
}

TEST(CrawfordNumber, Examples) {
  EXPECT_NEAR(crawford_number(MatrixPair(diag({2, 1}), SymMatrix::identity(2))), std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(crawford_number(MatrixPair(SymMatrix::identity(3), SymMatrix::identity(3))), std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(crawford_number(MatrixPair(SymMatrix::identity(4), -1.0 * SymMatrix::identity(4))), std::sqrt(2.0), 1e-6);
}

TEST(CrawfordNumber, ZeroWhenOriginInRange) {
  EXPECT_EQ(crawford_number(MatrixPair(diag({1, -1}), diag({1, -1}))), 0.0);
}

// Brute-force minimum of |(v^T A v, v^T B v)| over random unit vectors,
// with the best sample polished by projected gradient descent on the sphere.
double crawford_by_search(const MatrixPair& p, RngState& rng, int samples) {
  const auto value = [&](const Vector& v) { return std::hypot(quadratic_form(p.a, v), quadratic_form(p.b, v)); };
  Vector best_v = random_unit(rng, p.dim());
  double best = value(best_v);
  for (int i = 1; i < samples; ++i) {
    const Vector v = random_unit(rng, p.dim());
    const double f = value(v);
    if (f < best) {
      best = f;
      best_v = v;
    }
  }
  double step = 1e-2;
  for (int it = 0; it < 20000 && step > 1e-12; ++it) {
    const double qa = quadratic_form(p.a, best_v);
    const double qb = quadratic_form(p.b, best_v);
    Vector grad = 2.0 * qa * (p.a.matrix() * best_v) + 2.0 * qb * (p.b.matrix() * best_v);
    grad -= grad.dot(best_v) * best_v;
    Vector next = best_v - step * grad;
    next.normalize();
    const double f = value(next);
    if (f < best) {
      best = f;
      best_v = next;
      step *= 1.2;
    } else {
      step *= 0.5;
    }
  }
  return best;
}

TEST(CrawfordNumber, MatchesRandomSearch) {
  RngState rng(35, 0);
  const MatrixPair minus(SymMatrix::identity(4), -1.0 * SymMatrix::identity(4));
  EXPECT_NEAR(crawford_number(minus), crawford_by_search(minus, rng, 100000), 1e-3);
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixPair p = random_definite_pair(rng, 4);
    EXPECT_NEAR(crawford_number(p), crawford_by_search(p, rng, 100000), 1e-3);
  }
}

TEST(CrawfordNumber, NeverAboveSampledValues) {
  RngState rng(36, 0);
  const MatrixPair p = random_definite_pair(rng, 5);
  const double cr = crawford_number(p);
  for (int i = 0; i < 10000; ++i) {
    const Vector v = random_unit(rng, 5);
    ASSERT_LE(cr, std::hypot(quadratic_form(p.a, v), quadratic_form(p.b, v)) + 1e-12);
  }
}

TEST(CrInf, Examples) {
  RngState rng(37, 0);
  const MatrixPair p = random_definite_pair(rng, 6);
  EXPECT_LE(cr_inf(p, 6), crawford_number(p) + 1e-12);
  EXPECT_NEAR(cr_inf(MatrixPair(diag({2, 1}), diag({1, 1})), 1), std::sqrt(2.0), 1e-6);
}

// Direct minimum over every support of every size up to k'.
double cr_inf_all_sizes(const MatrixPair& p, std::size_t k_prime) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t size = 1; size <= k_prime; ++size)
    for_each_support(p.dim(), size, [&](const IndexSet& f) { best = std::min(best, crawford_number(restrict(p, f))); });
  return best;
}

TEST(CrInf, NonincreasingAndMatchesAllSizes) {
  RngState rng(38, 0);
  for (int trial = 0; trial < 2; ++trial) {
    const MatrixPair p = random_definite_pair(rng, 8);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= 8; ++k) {
      const double value = cr_inf(p, k);
      EXPECT_LE(value, prev + 1e-12);
      prev = value;
    }
  }
  const MatrixPair p = random_definite_pair(rng, 5);
  for (std::size_t k = 1; k <= 5; ++k) EXPECT_NEAR(cr_inf(p, k), cr_inf_all_sizes(p, k), 1e-12);
}

TEST(EpsilonK, Examples) {
  EXPECT_EQ(epsilon_k(SymMatrix::zero(3), SymMatrix::zero(3), 2), 0.0);
  EXPECT_NEAR(epsilon_k(diag({3, 0}), diag({0, 4}), 1), 5.0, 1e-12);
}

TEST(EpsilonK, NondecreasingInK) {
  RngState rng(39, 0);
  const SymMatrix ea = random_symmetric(rng, 6);
  const SymMatrix eb = random_symmetric(rng, 6);
  double prev = 0.0;
  for (std::size_t k = 1; k <= 6; ++k) {
    const double value = epsilon_k(ea, eb, k);
    EXPECT_GE(value, prev - 1e-12);
    prev = value;
  }
}

TEST(Eigengap, Examples) {
  EXPECT_NEAR(eigengap(MatrixPair(diag({2, 1}), SymMatrix::identity(2)), 0.0), 1.0 / (std::sqrt(5.0) * std::sqrt(2.0)),
              1e-12);
  EXPECT_NEAR(eigengap(MatrixPair(SymMatrix::identity(2), SymMatrix::identity(2)), 0.0), 0.0, 1e-12);
  EXPECT_NEAR(eigengap(MatrixPair(diag({4, 1}), SymMatrix::identity(2)), 0.5), 2.5 / (std::sqrt(17.0) * std::sqrt(1.25)),
              1e-12);
  EXPECT_NEAR(eigengap(MatrixPair(diag({4, 1}), SymMatrix::identity(2)), 0.5), 0.5423, 1e-4);
}

TEST(Eigengap, RejectsIndefiniteB) {
  expect_error(Errc::NotPositiveDefinite, [] { eigengap(MatrixPair(diag({2, 1}), diag({1, -1})), 0.0); });
}

TEST(TheoremQuantities, ZeroPerturbation) {
  RngState rng(40, 0);
  const MatrixPair p = random_definite_pair(rng, 6);
  const TheoremQuantities q = theorem1_quantities(p, SymMatrix::zero(6), SymMatrix::zero(6), 1, 2, 0.1);
  EXPECT_EQ(q.k_prime, 5u);
  EXPECT_EQ(q.eps_k, 0.0);
  EXPECT_EQ(q.omega_k, 0.0);
  EXPECT_FALSE(q.gap_violated);
  EXPECT_GT(q.cr_k, 0.0);
  EXPECT_GT(q.nu, 0.0);
  EXPECT_GE(q.c_upper, 1.0);
  EXPECT_LE(q.c_lower, 1.0);
  EXPECT_GT(q.c_lower, 0.0);
}

TEST(TheoremQuantities, ContractionFactorExamples) {
  // gamma = lambda2 / lambda1 = 0.5 with a = 0, B = I
  const MatrixPair p(diag({2, 1}), SymMatrix::identity(2));
  const TheoremConstants constants{0.0, 0.0, 0.0};
  const TheoremQuantities q4 = theorem1_quantities(p, SymMatrix::zero(2), SymMatrix::zero(2), 1, 4, 0.5, constants);
  EXPECT_NEAR(q4.gamma, 0.5, 1e-12);
  EXPECT_NEAR(q4.kappa_b, 1.0, 1e-12);
  EXPECT_NEAR(q4.nu, std::sqrt(2.5) * std::sqrt(1.0 - 0.125 * 0.5 * (0.5 / 1.5)), 1e-12);
  EXPECT_NEAR(q4.nu, 1.5646, 1e-4);

  const TheoremQuantities q100 = theorem1_quantities(p, SymMatrix::zero(2), SymMatrix::zero(2), 1, 100, 0.5, constants);
  EXPECT_NEAR(q100.nu, 1.0929, 1e-4);
}

TEST(TheoremQuantities, ReportsGapViolation) {
  const MatrixPair p(diag({2, 1.9}), SymMatrix::identity(2));
  const TheoremQuantities q = theorem1_quantities(p, diag({0.5, -0.5}), SymMatrix::zero(2), 1, 1, 0.1);
  EXPECT_TRUE(q.gap_violated);
}

TEST(RestrictedLeadingGevec, FullSetMatchesGenEig) {
  RngState rng(41, 0);
  const MatrixPair p = random_definite_pair(rng, 5);
  const RestrictedGevec r = restricted_leading_gevec(p, IndexSet::all(5));
  const EigenDecomposition e = gen_eig(p);
  EXPECT_NEAR(r.lambda, e.max(), 1e-12);
  EXPECT_NEAR(std::abs(r.v.dot(p.b.matrix() * e.eigenvectors.col(0))), 1.0, 1e-9);
  EXPECT_NEAR(quadratic_form(p.b, r.v), 1.0, 1e-10);
  EXPECT_NEAR(r.y.norm(), 1.0, 1e-12);
  EXPECT_LE((p.a.matrix() * r.v - r.lambda * (p.b.matrix() * r.v)).norm(), 1e-8);
}

TEST(RestrictedLeadingGevec, SingleCoordinate) {
  const MatrixPair p(diag({3, 2, 1}), diag({1, 4, 1}));
  const RestrictedGevec r = restricted_leading_gevec(p, IndexSet({1}));
  EXPECT_NEAR(r.v(1), 0.5, 1e-12);
  EXPECT_EQ(r.v(0), 0.0);
  EXPECT_EQ(r.v(2), 0.0);
  EXPECT_NEAR(r.lambda, 0.5, 1e-12);
}

TEST(RestrictedLeadingGevec, ResidualOnSubset) {
  RngState rng(42, 0);
  const MatrixPair p = random_definite_pair(rng, 8);
  const IndexSet f({1, 3, 4, 6});
  const RestrictedGevec r = restricted_leading_gevec(p, f);
  const MatrixPair pf = restrict(p, f);
  const Vector vf = restrict(r.v, f);
  EXPECT_LE((pf.a.matrix() * vf - r.lambda * (pf.b.matrix() * vf)).norm(), 1e-8);
  for (std::size_t i = 0; i < 8; ++i)
    if (!f.contains(i)) EXPECT_EQ(r.v(static_cast<Eigen::Index>(i)), 0.0);
}

TEST(RestrictedLeadingGevec, RejectsIndefiniteBlock) {
  expect_error(Errc::NotPositiveDefinite,
               [] { restricted_leading_gevec(MatrixPair(diag({1, 2}), diag({1, 0})), IndexSet({0, 1})); });
}

TEST(Lemma3Bound, ZeroForExactPair) {
  RngState rng(43, 0);
  const MatrixPair p = random_definite_pair(rng, 6);
  EXPECT_EQ(lemma3_bound(p, p, IndexSet::all(6)), 0.0);
}

TEST(Lemma3Bound, ZeroGapPair) {
  const MatrixPair p(SymMatrix::identity(3), SymMatrix::identity(3));
  expect_error(Errc::ZeroGap, [&] { lemma3_bound(p, p, IndexSet::all(3)); });
}

TEST(Lemma3Bound, CoversSmallPerturbations) {
  RngState rng(44, 0);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const MatrixPair p = random_definite_pair(rng, 6);
    const MatrixPair hat(p.a + 1e-3 * random_symmetric(rng, 6), p.b + 1e-3 * random_symmetric(rng, 6));
    const Lemma3Terms terms = lemma3_terms(p, hat, IndexSet::all(6));
    if (!terms.precondition) continue;
    ++checked;
    const Vector truth = restricted_leading_gevec(p, IndexSet::all(6)).y;
    Vector y = restricted_leading_gevec(hat, IndexSet::all(6)).y;
    if (y.dot(truth) < 0.0) y = -y;
    EXPECT_LE((y - truth).norm(), terms.bound + 1e-9) << "trial " << trial;
  }
  EXPECT_GE(checked, 90);
}

TEST(PerturbedInterval, Examples) {
  const auto [lo, hi] = perturbed_eigenvalue_interval(2.0, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(lo, 2.0);
  EXPECT_DOUBLE_EQ(hi, 2.0);
  const auto [lo2, hi2] = perturbed_eigenvalue_interval(1.0, 1.0, 0.5);
  EXPECT_NEAR(lo2, 0.5 / 1.5, 1e-15);
  EXPECT_NEAR(hi2, 1.5 / 0.5, 1e-15);
  EXPECT_TRUE(std::isinf(perturbed_eigenvalue_interval(4.0, 1.0, 0.5).second));
}

TEST(ChordalDistance, BoundedByPerturbationOverCrawford) {
  // Each perturbed eigenvalue is within chordal distance eps / cr of its
  // unperturbed counterpart.
  RngState rng(45, 0);
  int checked = 0;
  while (checked < 200) {
    const std::size_t d = 2 + static_cast<std::size_t>(checked % 5);
    const MatrixPair p = random_definite_pair(rng, d);
    const double cr = crawford_number(p);
    const SymMatrix ea = random_symmetric(rng, d);
    const SymMatrix eb = random_symmetric(rng, d);
    const double scale = rng.uniform() * 0.9 * cr / std::hypot(spectral_norm(ea), spectral_norm(eb));
    const SymMatrix pb = p.b + scale * eb;
    if (sym_eig(pb).min() <= 0.0) continue;
    ++checked;
    const double eps = scale * std::hypot(spectral_norm(ea), spectral_norm(eb));
    const EigenDecomposition truth = gen_eig(p);
    const EigenDecomposition hat = gen_eig(MatrixPair(p.a + scale * ea, pb));
    for (Eigen::Index k = 0; k < truth.eigenvalues.size(); ++k)
      EXPECT_LE(chordal_distance(truth.eigenvalues(k), hat.eigenvalues(k)), eps / cr + 1e-9);
  }
}

TEST(PropertySweeps, Weyl) {
  const testing::SweepResult r = testing::weyl_sweep(200, 46);
  EXPECT_EQ(r.violations, 0) << "worst excess " << r.worst;
}

TEST(PropertySweeps, Truncation) {
  const testing::SweepResult r = testing::truncation_sweep(500, 47);
  EXPECT_EQ(r.violations, 0) << "worst excess " << r.worst;
}

TEST(PropertySweeps, RestrictedEigenvector) {
  const testing::SweepResult r = testing::restricted_eigvec_sweep(200, 48);
  EXPECT_EQ(r.checked, 200);
  EXPECT_EQ(r.violations, 0) << "worst excess " << r.worst;
}

}  // namespace
}  // namespace rifle
