#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "mpopf/hermitian.hpp"

namespace mpopf {
namespace {

HermitianMatrix random_hermitian(int n, std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  CMatrix a(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) a(r, c) = {g(rng), g(rng)};
  return HermitianMatrix::from_dense(a);
}

HermitianMatrix random_psd(int n, std::mt19937& rng) {
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> rank(0, n);
  CMatrix b(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) b(r, c) = {g(rng), g(rng)};
  const int k = rank(rng);
  for (int c = k; c < n; ++c) b.col(c).setZero();
  return HermitianMatrix::from_dense(b * b.adjoint());
}

double frob(const CMatrix& m) { return m.norm(); }

TEST(HermitianMatrix, StorageIsHermitianByConstruction) {
  std::mt19937 rng(1);
  const HermitianMatrix h = random_hermitian(4, rng);
  for (int r = 0; r < 4; ++r) {
    EXPECT_EQ(h(r, r).imag(), 0.0);
    for (int c = 0; c < 4; ++c) EXPECT_EQ(h(r, c), std::conj(h(c, r)));
  }
  EXPECT_EQ(h.param_count(), 16);
  const CMatrix d = h.dense();
  EXPECT_EQ(d, d.adjoint());
}

TEST(HermitianMatrix, SetUpperEntryUpdatesLower) {
  HermitianMatrix h = HermitianMatrix::zero(3);
  h.set(0, 2, {1.0, 2.0});
  EXPECT_EQ(h(2, 0), complex(1.0, -2.0));
  EXPECT_THROW(h.set(1, 1, {1.0, 1.0}), std::invalid_argument);
}

TEST(HermitianMatrix, RejectsOversize) {
  EXPECT_THROW(HermitianMatrix(7), std::invalid_argument);
  EXPECT_THROW(HermitianMatrix::from_dense(CMatrix::Zero(2, 3)), std::invalid_argument);
}

TEST(HermitianMatrix, ArithmeticAndEquality) {
  std::mt19937 rng(2);
  const HermitianMatrix a = random_hermitian(3, rng), b = random_hermitian(3, rng);
  EXPECT_LT(frob((a + b).dense() - (a.dense() + b.dense())), 1e-15);
  EXPECT_LT(frob((a - b).dense() - (a.dense() - b.dense())), 1e-15);
  EXPECT_LT(frob((2.5 * a).dense() - 2.5 * a.dense()), 1e-15);
  EXPECT_TRUE(a == a);
  EXPECT_FALSE(a == b);
  EXPECT_THROW(a + HermitianMatrix::zero(2), std::invalid_argument);
}

TEST(Inner, IdentityAndTraceless) {
  const CMatrix i2 = CMatrix::Identity(2, 2);
  EXPECT_DOUBLE_EQ(inner(i2, i2), 2.0);
  CMatrix x(2, 2);
  x << complex(0, 0), complex(0, 1), complex(0, -1), complex(0, 0);
  EXPECT_DOUBLE_EQ(inner(x, i2), 0.0);
  EXPECT_THROW(inner(i2, CMatrix::Identity(3, 3)), std::invalid_argument);
}

TEST(Inner, SelfInnerIsSquaredNormAndMatchesDense) {
  std::mt19937 rng(3);
  for (int t = 0; t < 50; ++t) {
    const HermitianMatrix a = random_hermitian(1 + t % 6, rng), b = random_hermitian(1 + t % 6, rng);
    EXPECT_GE(inner(a, a), 0.0);
    EXPECT_NEAR(inner(a, a), a.dense().squaredNorm(), 1e-12);
    EXPECT_NEAR(inner(a, b), inner(a.dense(), b.dense()), 1e-12);
  }
}

TEST(Eigh, IdentityEigenvaluesAreOne) {
  const auto ed = eigh(HermitianMatrix::identity(3));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(ed.values(k), 1.0, 1e-15);
}

TEST(Eigh, SwapMatrix) {
  HermitianMatrix w = HermitianMatrix::zero(2);
  w.set(1, 0, {1.0, 0.0});
  const auto ed = eigh(w);
  EXPECT_NEAR(ed.values(0), 1.0, 1e-14);
  EXPECT_NEAR(ed.values(1), -1.0, 1e-14);
  // Eigenvectors up to a unit phase.
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(ed.vectors.col(0).dot(CVector::Constant(2, s))), 1.0, 1e-14);
  CVector minus(2);
  minus << s, -s;
  EXPECT_NEAR(std::abs(ed.vectors.col(1).dot(minus)), 1.0, 1e-14);
}

TEST(Eigh, TwoByTwoMatchesCharacteristicPolynomial) {
  std::mt19937 rng(4);
  for (int t = 0; t < 500; ++t) {
    const HermitianMatrix w = random_hermitian(2, rng, 3.0);
    const double a = w(0, 0).real(), d = w(1, 1).real();
    const double disc = std::sqrt(0.25 * (a - d) * (a - d) + std::norm(w(1, 0)));
    const auto ed = eigh(w);
    EXPECT_NEAR(ed.values(0), 0.5 * (a + d) + disc, 1e-12);
    EXPECT_NEAR(ed.values(1), 0.5 * (a + d) - disc, 1e-12);
  }
}

TEST(Eigh, ReconstructionAndOrthonormality) {
  std::mt19937 rng(5);
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + t % 6;
    const HermitianMatrix w = random_hermitian(n, rng, t % 3 == 0 ? 100.0 : 1.0);
    const auto ed = eigh(w);
    const CMatrix& u = ed.vectors;
    const CMatrix rec = u * ed.values.cast<complex>().asDiagonal() * u.adjoint();
    EXPECT_LE(frob(rec - w.dense()), 1e-10 * std::max(1.0, frob(w.dense())));
    EXPECT_LE(frob(u.adjoint() * u - CMatrix::Identity(n, n)), 1e-10);
    for (int k = 1; k < n; ++k) EXPECT_GE(ed.values(k - 1), ed.values(k));
  }
}

TEST(Eigh, AgreesWithIndependentSolver) {
  std::mt19937 rng(6);
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + t % 5;
    const HermitianMatrix w = random_hermitian(n, rng);
    Eigen::SelfAdjointEigenSolver<CMatrix> ref(w.dense());
    const auto ed = eigh(w);
    for (int k = 0; k < n; ++k) EXPECT_NEAR(ed.values(k), ref.eigenvalues()(n - 1 - k), 1e-11);
  }
}

TEST(Eigh, RepeatedEigenvaluesAndZeroMatrix) {
  std::mt19937 rng(7);
  const HermitianMatrix p = random_psd(4, rng);
  const auto u = eigh(p).vectors;
  // Q diag(2,2,-1,-1) Q^H
  Eigen::Vector4d d(2, 2, -1, -1);
  const HermitianMatrix w = HermitianMatrix::from_dense(u * d.cast<complex>().asDiagonal() * u.adjoint());
  const auto ed = eigh(w);
  EXPECT_NEAR(ed.values(0), 2.0, 1e-12);
  EXPECT_NEAR(ed.values(1), 2.0, 1e-12);
  EXPECT_NEAR(ed.values(3), -1.0, 1e-12);
  const auto z = eigh(HermitianMatrix::zero(3));
  EXPECT_EQ(z.values(0), 0.0);
}

TEST(PsdProject, FixedPointOnPsdInput) {
  std::mt19937 rng(8);
  for (int t = 0; t < 100; ++t) {
    const HermitianMatrix p = random_psd(1 + t % 6, rng);
    EXPECT_LE(frob(psd_project(p).dense() - p.dense()), 1e-10 * std::max(1.0, frob(p.dense())));
  }
}

TEST(PsdProject, DiagonalTruncation) {
  HermitianMatrix w = HermitianMatrix::zero(2);
  w.set_diag(0, 2.0);
  w.set_diag(1, -3.0);
  const HermitianMatrix x = psd_project(w);
  EXPECT_NEAR(x.diag(0), 2.0, 1e-15);
  EXPECT_NEAR(x.diag(1), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(x(1, 0)), 0.0, 1e-15);
}

TEST(PsdProject, SwapMatrixKeepsPositiveEigenpair) {
  HermitianMatrix w = HermitianMatrix::zero(2);
  w.set(1, 0, {1.0, 0.0});
  const CMatrix x = psd_project(w).dense();
  EXPECT_LE(frob(x - CMatrix::Constant(2, 2, 0.5)), 1e-14);
}

TEST(PsdProject, PsdIdempotentAndOptimalValue) {
  std::mt19937 rng(9);
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + t % 6;
    const HermitianMatrix w = random_hermitian(n, rng);
    const HermitianMatrix x = psd_project(w);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(x.dense());
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    EXPECT_LE(frob(psd_project(x).dense() - x.dense()), 1e-10);
    double neg = 0.0;
    for (int k = 0; k < n; ++k) {
      const double l = eigh(w).values(k);
      if (l <= 0.0) neg += l * l;
    }
    EXPECT_NEAR(squared_norm(x - w), neg, 1e-8);
  }
}

TEST(PsdProject, BeatsRandomPsdCandidates) {
  std::mt19937 rng(10);
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + t % 6;
    const HermitianMatrix w = random_hermitian(n, rng);
    const double best = std::sqrt(squared_norm(psd_project(w) - w));
    for (int c = 0; c < 50; ++c) EXPECT_LE(best, std::sqrt(squared_norm(random_psd(n, rng) - w)) + 1e-9);
  }
}

TEST(MinEigenvalue, MatchesSmallestValue) {
  HermitianMatrix w = HermitianMatrix::zero(3);
  w.set_diag(0, 1.0);
  w.set_diag(1, -2.0);
  w.set_diag(2, 4.0);
  EXPECT_NEAR(min_eigenvalue(w), -2.0, 1e-15);
}

}  // namespace
}  // namespace mpopf
