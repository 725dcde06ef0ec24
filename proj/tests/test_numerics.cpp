#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fas/numerics.hpp"
#include "support.hpp"

using namespace fas;
using fas::testing::random_matrix;

namespace {

double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

void expect_moore_penrose(const Matrix& a, const Matrix& p, double tol) {
    EXPECT_LT(max_abs(a * p * a - a), tol);
    EXPECT_LT(max_abs(p * a * p - p), tol);
    EXPECT_LT(max_abs((a * p).transpose() - a * p), tol);
    EXPECT_LT(max_abs((p * a).transpose() - p * a), tol);
}

}  // namespace

TEST(RngStream, MatchesReferenceSequence) {
    // Values from tests/oracles/generate.py (independent mt19937_64).
    RngStream a(42, 0);
    EXPECT_EQ(a.next_u64(), 0x7902cd09dfbcbfa7ull);
    EXPECT_EQ(a.next_u64(), 0xe89e0b257b86a0bcull);
    EXPECT_EQ(a.next_u64(), 0xa552a427280bd321ull);

    RngStream child = RngStream(42, 7).split(3);
    EXPECT_EQ(child.next_u64(), 0x6a4715d52854b9e7ull);

    RngStream b(5, 1);
    EXPECT_DOUBLE_EQ(b.uniform(), 0.726683067539401);
    EXPECT_NEAR(b.normal(), 0.80289834405567191, 1e-15);
    EXPECT_NEAR(b.normal(), -0.090946714949434824, 1e-15);
}

TEST(RngStream, EqualSeedAndStreamGiveEqualDraws) {
    RngStream a(9, 4), b(9, 4);
    for (int i = 0; i < 1000; ++i) {
        ASSERT_EQ(a.next_u64(), b.next_u64());
        ASSERT_EQ(a.normal(), b.normal());
    }
}

TEST(RngStream, StreamsAndChildrenDiffer) {
    EXPECT_NE(RngStream(9, 0).next_u64(), RngStream(9, 1).next_u64());
    EXPECT_NE(RngStream(9, 0).next_u64(), RngStream(10, 0).next_u64());
    const RngStream root(3, 2);
    EXPECT_NE(root.split(0).next_u64(), root.split(1).next_u64());
    EXPECT_EQ(root.split(5).next_u64(), root.split(5).next_u64());
}

TEST(RngStream, UniformAndIndexRanges) {
    RngStream rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(rng.index(7), 7u);
    }
    EXPECT_THROW(rng.index(0), InvalidInput);
}

TEST(PseudoInverse, Identity) {
    const Matrix id = Matrix::Identity(3, 3);
    EXPECT_LT(max_abs(pseudo_inverse(id) - id), 1e-15);
}

TEST(PseudoInverse, ColumnOfOnes) {
    Matrix a(2, 1);
    a << 1, 1;
    const Matrix p = pseudo_inverse(a);
    ASSERT_EQ(p.rows(), 1);
    ASSERT_EQ(p.cols(), 2);
    EXPECT_NEAR(p(0, 0), 0.5, 1e-15);
    EXPECT_NEAR(p(0, 1), 0.5, 1e-15);
}

TEST(PseudoInverse, MatchesExactRationalValues) {
    Matrix a(3, 2);
    a << 1, 2, 3, 4, 5, 6;
    Matrix expected(2, 3);
    expected << -4.0 / 3, -1.0 / 3, 2.0 / 3, 13.0 / 12, 1.0 / 3, -5.0 / 12;
    EXPECT_LT(max_abs(pseudo_inverse(a) - expected), 1e-13);
}

TEST(PseudoInverse, MoorePenroseConditionsOnRandomFullRank) {
    RngStream rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = random_matrix(6, 4, rng);
        const Matrix p = pseudo_inverse(a);
        expect_moore_penrose(a, p, 1e-9);
        EXPECT_LT(max_abs(a * p * a - a), 1e-9);
    }
}

TEST(PseudoInverse, MoorePenroseConditionsOnRankDeficient) {
    RngStream rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = random_matrix(7, 2, rng) * random_matrix(2, 5, rng);  // rank 2
        expect_moore_penrose(a, pseudo_inverse(a), 1e-9);
    }
}

TEST(PseudoInverse, InverseOfInvertibleSquare) {
    RngStream rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = random_matrix(5, 5, rng) + 3.0 * Matrix::Identity(5, 5);
        const Matrix inv = a.inverse();
        EXPECT_LT(max_abs(pseudo_inverse(a) - inv) / max_abs(inv), 1e-9);
    }
}

TEST(PseudoInverse, IsAnInvolutionOnFullRank) {
    RngStream rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = random_matrix(4, 6, rng);
        EXPECT_LT(max_abs(pseudo_inverse(pseudo_inverse(a)) - a) / max_abs(a), 1e-8);
    }
}

TEST(PseudoInverse, RejectsBadInput) {
    Matrix a = Matrix::Ones(2, 2);
    a(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(pseudo_inverse(a), InvalidInput);
    EXPECT_THROW(pseudo_inverse(Matrix(0, 3)), InvalidInput);
    EXPECT_THROW(pseudo_inverse(Matrix::Ones(2, 2), 0.0), InvalidInput);
}

TEST(SampleGaussianDiag, ZeroVarianceGivesZero) {
    RngStream rng(2);
    EXPECT_EQ(sample_gaussian_diag(Vector::Zero(5), rng), Vector::Zero(5));
}

TEST(SampleGaussianDiag, UnitMoments) {
    RngStream rng(3);
    const Eigen::Index dim = 3;
    const int draws = 1'000'000;
    Vector sum = Vector::Zero(dim), sq = Vector::Zero(dim);
    const Vector ones = Vector::Ones(dim);
    for (int i = 0; i < draws; ++i) {
        const Vector x = sample_gaussian_diag(ones, rng);
        sum += x;
        sq += x.cwiseProduct(x);
    }
    for (Eigen::Index k = 0; k < dim; ++k) {
        const double mean = sum(k) / draws;
        EXPECT_NEAR(mean, 0.0, 0.01);
        EXPECT_NEAR(sq(k) / draws - mean * mean, 1.0, 0.02);
    }
}

TEST(SampleGaussianDiag, ScalesByStandardDeviation) {
    RngStream a(4), b(4);
    Vector var(2);
    var << 4.0, 0.25;
    const Vector x = sample_gaussian_diag(var, a);
    const Vector z = sample_gaussian_diag(Vector::Ones(2), b);
    EXPECT_DOUBLE_EQ(x(0), 2.0 * z(0));
    EXPECT_DOUBLE_EQ(x(1), 0.5 * z(1));
}

TEST(SampleGaussianDiag, Deterministic) {
    RngStream a(8, 8), b(8, 8);
    const Vector var = Vector::Constant(10, 2.0);
    EXPECT_EQ(sample_gaussian_diag(var, a), sample_gaussian_diag(var, b));
}

TEST(SampleGaussianDiag, RejectsNegativeOrNonFinite) {
    RngStream rng(5);
    Vector var(2);
    var << 1.0, -1.0;
    EXPECT_THROW(sample_gaussian_diag(var, rng), InvalidInput);
    var(1) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(sample_gaussian_diag(var, rng), InvalidInput);
}

TEST(LogAddExp, StableAtExtremes) {
    EXPECT_NEAR(log_add_exp(0.0, 0.0), std::log(2.0), 1e-15);
    EXPECT_NEAR(log_add_exp(1000.0, 1000.0), 1000.0 + std::log(2.0), 1e-12);
    EXPECT_NEAR(log_add_exp(-1000.0, 0.0), 0.0, 1e-15);
    const double ninf = -std::numeric_limits<double>::infinity();
    EXPECT_EQ(log_add_exp(ninf, ninf), ninf);
    EXPECT_EQ(log_add_exp(ninf, 2.0), 2.0);
}
