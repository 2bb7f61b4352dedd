#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "corrfusion/matrix.hpp"
#include "support.hpp"

using namespace corrfusion;
using cftest::naive_matmul;
using cftest::random_matrix;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix a{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(Matrix::identity(2), a), a);
}

TEST(Matmul, RowTimesColumn) {
  const Matrix a{{1, 2}};
  const Matrix b{{3}, {4}};
  EXPECT_EQ(matmul(a, b), (Matrix{{11}}));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_matrix(5, 7, rng);
    const Matrix b = random_matrix(7, 3, rng);
    const Matrix c = matmul(a, b);
    const Matrix ref = naive_matmul(a, b);
    ASSERT_EQ(c.rows(), 5u);
    ASSERT_EQ(c.cols(), 3u);
    EXPECT_LE(max_abs_diff(c, ref), 1e-12);
  }
}

TEST(Matmul, MismatchNamesBothShapes) {
  const Matrix a(2, 3), b(2, 3);
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2x3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(2x3)", msg.find("(2x3)") + 1), std::string::npos) << msg;
  }
}

TEST(Matmul, TransposedVariantsAgreeWithExplicitTranspose) {
  std::mt19937_64 rng(8);
  const Matrix a = random_matrix(6, 4, rng);
  const Matrix b = random_matrix(6, 5, rng);
  const Matrix c = random_matrix(3, 4, rng);
  EXPECT_LE(max_abs_diff(matmul_tn(a, b), naive_matmul(transpose(a), b)), 1e-12);
  EXPECT_LE(max_abs_diff(matmul_nt(a, c), naive_matmul(a, transpose(c))), 1e-12);
  EXPECT_THROW(matmul_tn(a, c), ShapeError);
  EXPECT_THROW(matmul_nt(a, b), ShapeError);
}

TEST(Matmul, Associativity) {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix a = random_matrix(4, 6, rng);
    const Matrix b = random_matrix(6, 5, rng);
    const Matrix c = random_matrix(5, 3, rng);
    EXPECT_LE(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-9);
  }
}

TEST(Matmul, TransposeOfProduct) {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix a = random_matrix(3, 5, rng);
    const Matrix b = random_matrix(5, 4, rng);
    EXPECT_LE(max_abs_diff(transpose(matmul(a, b)), matmul(transpose(b), transpose(a))), 1e-12);
  }
}

TEST(Transpose, HandCase) {
  EXPECT_EQ(transpose(Matrix{{1, 2}, {3, 4}}), (Matrix{{1, 3}, {2, 4}}));
}

TEST(Transpose, Involution) {
  std::mt19937_64 rng(11);
  const Matrix a = random_matrix(4, 7, rng);
  EXPECT_EQ(transpose(transpose(a)), a);
}

TEST(Transpose, RowBecomesColumn) {
  const Matrix t = transpose(Matrix{{1, 2, 3}});
  EXPECT_EQ(t.rows(), 3u);
  EXPECT_EQ(t.cols(), 1u);
  EXPECT_EQ(t, (Matrix{{1}, {2}, {3}}));
}

TEST(RowNorms, ThreeFourFive) {
  const auto n = row_l2_norms(Matrix{{3, 4}});
  ASSERT_EQ(n.size(), 1u);
  EXPECT_DOUBLE_EQ(n[0], 5.0);
}

TEST(RowNorms, ZeroMatrix) {
  for (double v : row_l2_norms(Matrix(3, 5))) EXPECT_EQ(v, 0.0);
}

TEST(RowNorms, MatchScalarLoop) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 100; ++rep) {
    const Matrix a = random_matrix(4, 6, rng);
    const auto n = row_l2_norms(a);
    for (std::size_t k = 0; k < a.rows(); ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) s += a(k, j) * a(k, j);
      EXPECT_NEAR(n[k], std::sqrt(s), 1e-12);
      EXPECT_NEAR(n[k] * n[k], s, 1e-12);
      EXPECT_GE(n[k], 0.0);
    }
  }
}

TEST(Elementwise, AddSubtractScaleAndAxpy) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5, 6}, {7, 8}};
  EXPECT_EQ(a + b, (Matrix{{6, 8}, {10, 12}}));
  EXPECT_EQ(b - a, (Matrix{{4, 4}, {4, 4}}));
  EXPECT_EQ(2.0 * a, (Matrix{{2, 4}, {6, 8}}));
  EXPECT_EQ(hadamard(a, b), (Matrix{{5, 12}, {21, 32}}));
  Matrix c = a;
  axpy(0.5, b, c);
  EXPECT_EQ(c, (Matrix{{3.5, 5}, {6.5, 8}}));
  EXPECT_THROW(a + Matrix(2, 3), ShapeError);
}

TEST(RankOne, RowAndColumnHelpers) {
  Matrix a{{1, 2}, {3, 4}};
  const std::vector<double> bias{10, 20};
  add_to_rows<double>(a, bias);
  EXPECT_EQ(a, (Matrix{{11, 22}, {13, 24}}));
  const std::vector<double> s{2, -1};
  EXPECT_EQ(scale_rows<double>(a, s), (Matrix{{22, 44}, {-13, -24}}));
  EXPECT_EQ(column_sums(a), (std::vector<double>{24, 46}));
  EXPECT_EQ(row_dots(a, a), (std::vector<double>{11 * 11 + 22 * 22, 13 * 13 + 24 * 24}));
  const std::vector<double> wrong{1, 2, 3};
  EXPECT_THROW(add_to_rows<double>(a, wrong), ShapeError);
}

TEST(Norms, FrobeniusIsRootOfSquaredRowNorms) {
  std::mt19937_64 rng(13);
  const Matrix a = random_matrix(5, 3, rng);
  double s = 0.0;
  for (double r : row_l2_norms(a)) s += r * r;
  EXPECT_NEAR(frobenius_norm(a), std::sqrt(s), 1e-12);
}

TEST(Finite, NonFiniteEntriesAreRejected) {
  Matrix a{{1, 2}};
  EXPECT_TRUE(all_finite(a));
  require_finite(a, "a");
  a(0, 1) = std::nan("");
  EXPECT_FALSE(all_finite(a));
  EXPECT_THROW(require_finite(a, "a"), NumericError);
}

TEST(Construction, DataLengthMustMatchShape) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW((Matrix{{1, 2}, {3}}), ShapeError);
}

TEST(GatherRows, PicksInOrder) {
  const Matrix a{{1, 1}, {2, 2}, {3, 3}};
  const std::vector<std::size_t> idx{2, 0, 2};
  EXPECT_EQ((gather_rows<double, std::size_t>(a, idx)), (Matrix{{3, 3}, {1, 1}, {3, 3}}));
}
