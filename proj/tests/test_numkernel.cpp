#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "arcl/errors.hpp"
#include "arcl/numkernel.hpp"
#include "arcl/random.hpp"

using namespace arcl;

namespace {

Matrix naive_product(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  return worst;
}

}  // namespace

TEST(Matmul, HandExample) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5, 6}, {7, 8}};
  EXPECT_EQ(matmul(a, b), (Matrix{{19, 22}, {43, 50}}));
}

TEST(Matmul, IdentityIsNeutral) {
  Rng rng(7);
  const Matrix a = gaussian_matrix(5, 3, 1.0, rng);
  EXPECT_EQ(matmul(Matrix::identity(5), a), a);
  EXPECT_EQ(matmul(a, Matrix::identity(3)), a);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
  EXPECT_THROW(hadamard(Matrix(2, 3), Matrix(3, 2)), DimensionError);
  EXPECT_THROW(add(Matrix(1, 3), Matrix(3, 1)), DimensionError);
}

TEST(Matmul, AssociativeWithinRoundoff) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = gaussian_matrix(4, 6, 1.0, rng);
    const Matrix b = gaussian_matrix(6, 5, 1.0, rng);
    const Matrix c = gaussian_matrix(5, 3, 1.0, rng);
    EXPECT_LT(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-12);
  }
}

TEST(Matmul, TransposedVariantsMatchExplicitTranspose) {
  Rng rng(3);
  const Matrix a = gaussian_matrix(7, 4, 1.0, rng);
  const Matrix b = gaussian_matrix(7, 5, 1.0, rng);
  const Matrix c = gaussian_matrix(6, 4, 1.0, rng);
  EXPECT_LT(max_abs_diff(matmul_tn(a, b), naive_product(transpose(a), b)), 1e-13);
  EXPECT_LT(max_abs_diff(matmul_nt(a, c), naive_product(a, transpose(c))), 1e-13);
  EXPECT_LT(max_abs_diff(matmul(a, transpose(c)), naive_product(a, transpose(c))), 1e-13);
}

TEST(Transpose, Involution) {
  Rng rng(5);
  const Matrix a = gaussian_matrix(3, 8, 1.0, rng);
  EXPECT_EQ(transpose(transpose(a)), a);
  EXPECT_EQ(transpose(a)(7, 2), a(2, 7));
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(9);
  for (double spread : {1e-3, 1.0, 30.0, 700.0}) {
    const Matrix s = softmax_rows(gaussian_matrix(6, 9, spread, rng));
    for (std::size_t r = 0; r < s.rows(); ++r) {
      double total = 0.0;
      for (double v : s.row(r)) {
        EXPECT_GE(v, 0.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12) << "spread " << spread;
    }
  }
}

TEST(Softmax, ShiftInvariantAndUniformOnConstantRows) {
  const Matrix a{{1, 2, 3}, {5, 5, 5}};
  const Matrix s = softmax_rows(a);
  const Matrix shifted = softmax_rows(add(a, Matrix(2, 3, 1000.0)));
  EXPECT_LT(max_abs_diff(s, shifted), 1e-15);
  for (double v : s.row(1)) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(s(0, 2), std::exp(3.0) / z, 1e-15);
}

TEST(Elementwise, HadamardScaleNorm) {
  const Matrix a{{1, -2}, {3, 4}};
  EXPECT_EQ(hadamard(a, a), (Matrix{{1, 4}, {9, 16}}));
  EXPECT_EQ(scale(a, -1.0), (Matrix{{-1, 2}, {-3, -4}}));
  EXPECT_EQ(subtract(a, a), Matrix(2, 2));
  EXPECT_DOUBLE_EQ(frobenius_norm(a), std::sqrt(30.0));
  Matrix acc(2, 2, 1.0);
  add_inplace(acc, a);
  EXPECT_EQ(acc, (Matrix{{2, -1}, {4, 5}}));
}

TEST(Blocks, ColumnBlockRoundTrip) {
  Rng rng(1);
  const Matrix a = gaussian_matrix(4, 6, 1.0, rng);
  Matrix b(4, 6);
  set_col_block(b, 0, col_block(a, 0, 3));
  set_col_block(b, 3, col_block(a, 3, 3));
  EXPECT_EQ(a, b);
  EXPECT_THROW(col_block(a, 4, 3), DimensionError);
}

TEST(Finiteness, KernelsRejectNonFiniteResults) {
  const double inf = std::numeric_limits<double>::infinity();
  const Matrix big{{1e308, 1e308}};
  EXPECT_THROW(add(big, big), NumericalError);
  EXPECT_THROW(matmul(Matrix{{inf}}, Matrix{{1.0}}), NumericalError);
  EXPECT_THROW(require_finite(Matrix{{std::nan("")}}, "test"), NumericalError);
}

TEST(Construction, RaggedAndSizeMismatchRejected) {
  EXPECT_THROW((Matrix{{1, 2}, {3}}), DimensionError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
}
