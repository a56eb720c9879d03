#include <cmath>

#include <gtest/gtest.h>

#include "pfl/rng.hpp"
#include "pfl/tensor.hpp"

namespace pfl {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::zeros(r, c);
  for (auto& v : t.data()) v = rng.normal(0.0, 1.0);
  return t;
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  const Tensor id = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor m = Tensor::matrix({{1.5, -2}, {3, 4.25}});
  EXPECT_TRUE(matmul(id, m).bit_equal(m));
}

TEST(Matmul, RowTimesColumn) {
  const Tensor out = matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
  ASSERT_EQ(out.shape(), (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(out[0], 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(17);
  const Tensor a = random_matrix(3, 4, rng);
  const Tensor b = random_matrix(4, 2, rng);
  const Tensor out = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double ref = 0.0;
      for (std::size_t k = 0; k < 4; ++k) ref += a.at(i, k) * b.at(k, j);
      EXPECT_LE(std::abs(out.at(i, j) - ref), 1e-12);
    }
  }
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformOnEqualInputs) {
  const Tensor s = softmax(Tensor::row({0, 0, 0}), 1);
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ClosedFormForLog2) {
  const Tensor s = softmax(Tensor::row({std::log(2.0), 0.0}), 1);
  EXPECT_NEAR(s[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const Tensor s = softmax(Tensor::row({1000, 0}), 1);
  EXPECT_TRUE(std::isfinite(s[0]) && std::isfinite(s[1]));
  EXPECT_NEAR(s[0], 1.0, 1e-15);
  EXPECT_GE(s[1], 0.0);
  EXPECT_LT(s[1], 1e-300);
}

TEST(Softmax, RowsAndColumnsSumToOne) {
  Rng rng(3);
  const Tensor x = random_matrix(4, 5, rng);
  const Tensor rows = softmax(x, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_GT(rows.at(r, c), 0.0);
      EXPECT_LT(rows.at(r, c), 1.0);
      s += rows.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const Tensor cols = softmax(x, 0);
  for (std::size_t c = 0; c < 5; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < 4; ++r) s += cols.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_THROW(softmax(x, 2), ShapeError);
}

TEST(LayerNorm, ConstantSliceNormalizesToZero) {
  const Tensor out = layer_norm(Tensor::row({4, 4, 4}), Tensor::row({1, 1, 1}),
                                Tensor::row({0, 0, 0}), 1e-5);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoPointClosedForm) {
  const Tensor out = layer_norm(Tensor::row({1, 3}), Tensor::row({1, 1}),
                                Tensor::row({0, 0}), 1e-14);
  EXPECT_NEAR(out[0], -1.0, 1e-12);
  EXPECT_NEAR(out[1], 1.0, 1e-12);
}

TEST(LayerNorm, RandomSliceHasZeroMeanUnitVariance) {
  Rng rng(5);
  const Tensor x = random_matrix(1, 32, rng);
  const Tensor out = layer_norm(x, Tensor(std::vector<std::size_t>{32}, std::vector<double>(32, 1.0)),
                                Tensor(std::vector<std::size_t>{32}), 1e-12);
  double mean = 0.0;
  for (double v : out.data()) mean += v;
  mean /= 32.0;
  double var = 0.0;
  for (double v : out.data()) var += (v - mean) * (v - mean);
  var /= 32.0;
  EXPECT_LE(std::abs(mean), 1e-10);
  EXPECT_LE(std::abs(var - 1.0), 1e-6);
}

TEST(LayerNorm, RejectsMismatchedGain) {
  EXPECT_THROW(layer_norm(Tensor::row({1, 2, 3}), Tensor::row({1, 1}), Tensor::row({0, 0}), 1e-5),
               ShapeError);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  EXPECT_NEAR(cross_entropy(Tensor::row({0.7, 0.7, 0.7}), 2), std::log(3.0), 1e-15);
}

TEST(CrossEntropy, ConfidentCorrectIsNearZero) {
  const double ce = cross_entropy(Tensor::row({20, 0, 0}), 0);
  EXPECT_GE(ce, 0.0);
  EXPECT_LT(ce, 1e-8);
}

TEST(CrossEntropy, MatchesLogOfSoftmaxEntry) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = random_matrix(1, 3, rng);
    const std::size_t label = rng.below(3);
    double denom = 0.0;
    for (double v : z.data()) denom += std::exp(v);
    const double ref = -std::log(std::exp(z[label]) / denom);
    EXPECT_LE(std::abs(cross_entropy(z, label) - ref), 1e-12);
  }
}

TEST(CrossEntropy, LabelOutOfRangeThrows) {
  EXPECT_THROW(cross_entropy(Tensor::row({1, 2, 3}), 3), std::out_of_range);
}

TEST(Tensor, RejectsInconsistentShape) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensor({0, 2}), ShapeError);
}

TEST(Tensor, OpsAreDeterministic) {
  Rng rng(1);
  const Tensor a = random_matrix(5, 7, rng);
  const Tensor b = random_matrix(7, 3, rng);
  EXPECT_TRUE(matmul(a, b).bit_equal(matmul(a, b)));
  EXPECT_TRUE(softmax(a, 1).bit_equal(softmax(a, 1)));
}

}  // namespace
}  // namespace pfl
