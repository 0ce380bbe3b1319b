#include <gtest/gtest.h>

#include <cmath>

#include "rifle/linalg.hpp"
#include "test_util.hpp"

namespace rifle {
namespace {

using testing::random_pd;
using testing::random_symmetric;

TEST(SymMatrix, SymmetrizesAndFlagsAsymmetry) {
  Matrix m(2, 2);
  m << 1.0, 2.0, 4.0, 3.0;
  const SymMatrix s(m);
  EXPECT_DOUBLE_EQ(s(0, 1), 3.0);
  EXPECT_DOUBLE_EQ(s(1, 0), 3.0);
  EXPECT_TRUE(s.asymmetric());

  m(1, 0) = 2.0 + 1e-14;
  EXPECT_FALSE(SymMatrix(m).asymmetric());
}

TEST(SymMatrix, RejectsNonFiniteAndNonSquare) {
  Matrix m = Matrix::Identity(2, 2);
  m(0, 0) = std::nan("");
  EXPECT_THROW(SymMatrix{m}, Error);
  try {
    SymMatrix(Matrix::Zero(2, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimMismatch);
  }
}

TEST(IndexSet, RequiresStrictlyIncreasing) {
  EXPECT_THROW(IndexSet({2, 1}), Error);
  EXPECT_THROW(IndexSet({1, 1}), Error);
  EXPECT_EQ(IndexSet::from_unsorted({3, 1, 3}), IndexSet({1, 3}));
}

TEST(Cholesky, Identity) {
  const CholeskyFactor f = cholesky(SymMatrix::identity(3));
  EXPECT_TRUE(f.lower.isApprox(Matrix::Identity(3, 3)));
}

TEST(Cholesky, TwoByTwo) {
  const CholeskyFactor f = cholesky(SymMatrix{{4, 2}, {2, 5}});
  Matrix expected(2, 2);
  expected << 2, 0, 1, 2;
  EXPECT_LT((f.lower - expected).norm(), 1e-15);
}

TEST(Cholesky, IndefiniteThrows) {
  try {
    cholesky(SymMatrix{{1, 2}, {2, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotPositiveDefinite);
  }
}

TEST(Cholesky, ReconstructsRandomPd) {
  RngState rng(11, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const SymMatrix m = random_pd(rng, 7);
    const CholeskyFactor f = cholesky(m);
    EXPECT_TRUE(f.lower.isLowerTriangular());
    EXPECT_TRUE((f.lower.diagonal().array() > 0.0).all());
    EXPECT_LE((f.lower * f.lower.transpose() - m.matrix()).norm(), 1e-10 * m.frobenius_norm());
  }
}

TEST(SymEig, Diagonal) {
  const EigenDecomposition e = sym_eig(SymMatrix{{3, 0}, {0, 1}});
  EXPECT_DOUBLE_EQ(e.eigenvalues(0), 3.0);
  EXPECT_DOUBLE_EQ(e.eigenvalues(1), 1.0);
  EXPECT_NEAR(std::abs(e.eigenvectors(0, 0)), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(e.eigenvectors(1, 1)), 1.0, 1e-15);
}

TEST(SymEig, TwoByTwoSymmetric) {
  const EigenDecomposition e = sym_eig(SymMatrix{{2, 1}, {1, 2}});
  EXPECT_NEAR(e.eigenvalues(0), 3.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues(1), 1.0, 1e-14);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(e.eigenvectors(0, 0)), r, 1e-14);
  EXPECT_NEAR(e.eigenvectors(0, 0) * e.eigenvectors(1, 0), 0.5, 1e-14);
  EXPECT_NEAR(e.eigenvectors(0, 1) * e.eigenvectors(1, 1), -0.5, 1e-14);
}

TEST(SymEig, ReconstructionAndOrthonormality) {
  RngState rng(5, 0);
  const SymMatrix m = random_symmetric(rng, 5);
  const EigenDecomposition e = sym_eig(m);
  const Matrix rebuilt = e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.transpose();
  EXPECT_LT((rebuilt - m.matrix()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((e.eigenvectors.transpose() * e.eigenvectors - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index j = 0; j < 5; ++j) {
    const double resid = (m.matrix() * e.eigenvectors.col(j) - e.eigenvalues(j) * e.eigenvectors.col(j)).norm();
    EXPECT_LE(resid, 1e-8 * (1.0 + std::abs(e.eigenvalues(j))) * m.frobenius_norm());
  }
}

// Independent route: Eigen's tridiagonal QR solver.
TEST(SymEig, AgreesWithTridiagonalQr) {
  RngState rng(6, 0);
  for (std::size_t d : {1u, 2u, 9u, 30u}) {
    const SymMatrix m = random_symmetric(rng, d);
    const Eigen::SelfAdjointEigenSolver<Matrix> ref(m.matrix());
    const Vector expected = ref.eigenvalues().reverse();
    EXPECT_LT((sym_eig(m).eigenvalues - expected).cwiseAbs().maxCoeff(), 1e-10) << "d=" << d;
  }
}

TEST(SymEig, TraceEqualsEigenvalueSum) {
  RngState rng(7, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const SymMatrix m = random_symmetric(rng, 1 + static_cast<std::size_t>(trial % 8));
    const double sum = sym_eig(m).eigenvalues.sum();
    EXPECT_NEAR(sum, m.trace(), 1e-9 * std::max(1.0, std::abs(m.trace())));
  }
}

TEST(SymEig, ZeroMatrix) {
  const EigenDecomposition e = sym_eig(SymMatrix::zero(3));
  EXPECT_EQ(e.eigenvalues.cwiseAbs().maxCoeff(), 0.0);
}

// Weyl: lambda_k(J) + lambda_min(E) <= lambda_k(J+E) <= lambda_k(J) + lambda_max(E).
TEST(SymEig, WeylInequalities) {
  RngState rng(8, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(trial % 8);
    const SymMatrix j = random_symmetric(rng, d);
    const SymMatrix e = 0.3 * random_symmetric(rng, d);
    const EigenDecomposition ej = sym_eig(j);
    const EigenDecomposition ee = sym_eig(e);
    const EigenDecomposition es = sym_eig(j + e);
    for (std::size_t k = 0; k < d; ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      EXPECT_GE(es.eigenvalues(i), ej.eigenvalues(i) + ee.min() - 1e-9);
      EXPECT_LE(es.eigenvalues(i), ej.eigenvalues(i) + ee.max() + 1e-9);
    }
  }
}

TEST(GenEig, DecoupledRatios) {
  const MatrixPair p(SymMatrix{{4, 0}, {0, 9}}, SymMatrix{{1, 0}, {0, 9}});
  const EigenDecomposition e = gen_eig(p);
  EXPECT_NEAR(e.eigenvalues(0), 4.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues(1), 1.0, 1e-14);
}

TEST(GenEig, IdentityBMatchesSymEig) {
  RngState rng(9, 0);
  const SymMatrix a = random_symmetric(rng, 6);
  const EigenDecomposition g = gen_eig(MatrixPair(a, SymMatrix::identity(6)));
  EXPECT_LT((g.eigenvalues - sym_eig(a).eigenvalues).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GenEig, ResidualAndBNormalization) {
  RngState rng(10, 0);
  const MatrixPair p(random_symmetric(rng, 6), random_pd(rng, 6));
  const EigenDecomposition g = gen_eig(p);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < 6; ++j) {
    const Vector w = g.eigenvectors.col(j);
    worst = std::max(worst, (p.a.matrix() * w - g.eigenvalues(j) * (p.b.matrix() * w)).norm());
    EXPECT_NEAR(quadratic_form(p.b, w), 1.0, 1e-10);
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(GenEig, PropagatesNotPositiveDefinite) {
  try {
    gen_eig(MatrixPair(SymMatrix::identity(2), SymMatrix{{1, 2}, {2, 1}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotPositiveDefinite);
  }
}

TEST(GenEig, InvariantUnderJointCongruence) {
  RngState rng(12, 0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial % 5);
    const auto n = static_cast<Eigen::Index>(d);
    const MatrixPair p(random_symmetric(rng, d), random_pd(rng, d));
    const Matrix s = testing::random_matrix(rng, n, n) + 2.0 * Matrix::Identity(n, n);
    const MatrixPair q(SymMatrix(Matrix(s.transpose() * p.a.matrix() * s)),
                       SymMatrix(Matrix(s.transpose() * p.b.matrix() * s)));
    const Vector l1 = gen_eig(p).eigenvalues;
    const Vector l2 = gen_eig(q).eigenvalues;
    EXPECT_LT((l1 - l2).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, l1.cwiseAbs().maxCoeff()));
  }
}

TEST(QuadraticForm, Examples) {
  Vector v(2);
  v << 1.0, 1.0;
  EXPECT_DOUBLE_EQ(quadratic_form(SymMatrix{{2, 1}, {1, 2}}, v), 6.0);
  Vector e1(2);
  e1 << 1.0, 0.0;
  EXPECT_DOUBLE_EQ(quadratic_form(SymMatrix{{2, 0}, {0, 1}}, e1), 2.0);
  Vector w(3);
  w << 0.3, -2.0, 1.5;
  EXPECT_DOUBLE_EQ(quadratic_form(SymMatrix::identity(3), w), w.squaredNorm());
  EXPECT_THROW(quadratic_form(SymMatrix::identity(3), v), Error);
}

TEST(QuadraticForm, Homogeneous) {
  RngState rng(13, 0);
  const SymMatrix m = random_symmetric(rng, 5);
  const Vector v = rng.normal_vector(5);
  for (double c : {-3.0, 0.25, 7.0}) {
    const double lhs = quadratic_form(m, c * v);
    const double rhs = c * c * quadratic_form(m, v);
    EXPECT_NEAR(lhs, rhs, 1e-13 * std::abs(rhs));
  }
}

TEST(Restrict, Examples) {
  const SymMatrix m = SymMatrix::diagonal((Vector(3) << 1, 2, 3).finished());
  EXPECT_EQ(restrict(m, IndexSet::all(3)).matrix(), m.matrix());
  const SymMatrix sub = restrict(m, IndexSet{0, 2});
  EXPECT_EQ(sub.matrix(), SymMatrix::diagonal((Vector(2) << 1, 3).finished()).matrix());
  try {
    restrict(m, IndexSet{0, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IndexOutOfRange);
  }
}

TEST(Restrict, ComposesThroughIndexMapping) {
  RngState rng(14, 0);
  const SymMatrix m = random_symmetric(rng, 7);
  const IndexSet outer{1, 2, 4, 6};
  const IndexSet inner{0, 2, 3};  // positions within outer -> {1, 4, 6}
  EXPECT_EQ(restrict(restrict(m, outer), inner).matrix(), restrict(m, IndexSet{1, 4, 6}).matrix());
}

}  // namespace
}  // namespace rifle
