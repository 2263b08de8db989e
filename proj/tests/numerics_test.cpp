// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "bimamba/error.hpp"
#include "bimamba/ops.hpp"
#include "bimamba/tensor.hpp"
#include "bimamba/tensor_io.hpp"
#include "test_util.hpp"

namespace bimamba {
namespace {

using testing::random_tensor;

TEST(TensorTest, RejectsLengthMismatchAndZeroExtent) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor(Shape{0, 3}), DimensionError);
}

TEST(TensorTest, CheckedModeRejectsNonFinite) {
  EXPECT_THROW(Tensor({1}, std::vector<double>{std::nan("")}), DomainError);
  set_checked_mode(false);
  EXPECT_NO_THROW(Tensor({1}, std::vector<double>{INFINITY}));
  set_checked_mode(true);
}

TEST(MatmulTest, IdentityAndBasisSelection) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(matmul(a, Tensor::eye(2)), a);
  const Tensor row({1, 2}, {1, 0});
  const Tensor col({2, 1}, {5, 7});
  EXPECT_EQ(matmul(row, col).values(), std::vector<double>{5});
}

TEST(MatmulTest, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double ref = 0.0;
      for (std::size_t k = 0; k < 4; ++k) ref += a.at({i, k}) * b.at({k, j});
      EXPECT_NEAR(c.at({i, j}), ref, 1e-12);
    }
  }
}

TEST(MatmulTest, BatchedLeadingDimsAndIdentityIsExact) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({2, 5, 3}, rng);
  EXPECT_EQ(matmul(x, Tensor::eye(3)), x);
  EXPECT_THROW(matmul(x, Tensor::eye(4)), DimensionError);
}

TEST(MatmulTest, TransposedVariantsAgreeWithExplicitTranspose) {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({2, 3, 4}, rng);
  const Tensor b = random_tensor({5, 4}, rng);
  Tensor bt({4, 5});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) bt.at({j, i}) = b.at({i, j});
  EXPECT_LT(max_abs_diff(matmul_nt(a, b), matmul(a, bt)), 1e-14);

  const Tensor g = random_tensor({2, 3, 5}, rng);
  const Tensor r = matmul_tn_reduce(a, g);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t p = 0; p < 5; ++p) {
      double ref = 0.0;
      for (std::size_t b0 = 0; b0 < 2; ++b0)
        for (std::size_t m = 0; m < 3; ++m) ref += a.at({b0, m, k}) * g.at({b0, m, p});
      EXPECT_NEAR(r.at({k, p}), ref, 1e-13);
    }
  }
}

TEST(ActivationTest, KnownValues) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_EQ(activate(0.0, Activation::silu), 0.0);
  EXPECT_NEAR(softplus(40.0), 40.0, 1e-12);
  EXPECT_NEAR(softplus(-40.0), std::exp(-40.0), 1e-30);
  EXPECT_EQ(activate(-1.0, Activation::relu), 0.0);
  EXPECT_EQ(activate(1.5, Activation::swish), activate(1.5, Activation::silu));
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
}

TEST(ActivationTest, DerivativesMatchCentralDifferences) {
  for (Activation kind : {Activation::silu, Activation::sigmoid, Activation::softplus}) {
    for (double x : {-3.0, -0.4, 0.0, 0.7, 5.0}) {
      const double h = 1e-6;
      const double fd = (activate(x + h, kind) - activate(x - h, kind)) / (2 * h);
      EXPECT_NEAR(activate_grad(x, kind), fd, 1e-8);
    }
  }
}

TEST(ConvTest, IdentityKernelAndZeroInput) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({2, 6, 3}, rng);
  EXPECT_EQ(depthwise_conv1d(x, Tensor({3, 1}, 1.0), Tensor({3}), true), x);
  EXPECT_EQ(depthwise_conv1d(x, Tensor({3, 1}, 1.0), Tensor({3}), false), x);

  const Tensor bias = Tensor::from({0.5, -1.0, 2.0});
  const Tensor y = depthwise_conv1d(Tensor({1, 4, 3}), random_tensor({3, 3}, rng), bias, true);
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(y.at({0, l, e}), bias[e]);
}

TEST(ConvTest, HandConvolutionCausal) {
  const Tensor x({1, 4, 1}, {1, 0, 0, 0});
  const Tensor y = depthwise_conv1d(x, Tensor({1, 2}, {0.5, 0.5}), Tensor({1}), true);
  EXPECT_EQ(y.values(), (std::vector<double>{0.5, 0.5, 0, 0}));
}

TEST(ConvTest, NonCausalCentredAndEvenWidthRejected) {
  const Tensor x({1, 3, 1}, {1, 2, 3});
  const Tensor y = depthwise_conv1d(x, Tensor({1, 3}, {1, 10, 100}), Tensor({1}), false);
  // y[l] = x[l-1] + 10 x[l] + 100 x[l+1]
  EXPECT_EQ(y.values(), (std::vector<double>{210, 321, 32}));
  EXPECT_THROW(depthwise_conv1d(x, Tensor({1, 2}), Tensor({1}), false), ConfigError);
}

TEST(ConvTest, CausalOutputIgnoresFuture) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({1, 8, 2}, rng);
  const Tensor w = random_tensor({2, 4}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Tensor y0 = depthwise_conv1d(x, w, b, true);
  x.at({0, 5, 1}) += 3.0;
  const Tensor y1 = depthwise_conv1d(x, w, b, true);
  for (std::size_t l = 0; l < 5; ++l)
    for (std::size_t e = 0; e < 2; ++e) EXPECT_EQ(y0.at({0, l, e}), y1.at({0, l, e}));
  EXPECT_NE(y0.at({0, 5, 1}), y1.at({0, 5, 1}));
}

TEST(NormalizeTest, LayerNormMoments) {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({3, 4, 16}, rng, -5.0, 5.0);
  const Tensor y = normalize(x, NormKind::layer, Tensor({16}, 1.0), Tensor({16}), 1e-12);
  for (std::size_t r = 0; r < 12; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 16; ++i) m += y[r * 16 + i];
    m /= 16;
    for (std::size_t i = 0; i < 16; ++i) v += (y[r * 16 + i] - m) * (y[r * 16 + i] - m);
    v /= 16;
    EXPECT_LT(std::abs(m), 1e-10);
    EXPECT_NEAR(v, 1.0, 1e-8);
  }
}

TEST(NormalizeTest, ConstantVectorGivesBias) {
  const Tensor x({1, 1, 4}, 3.0);
  const Tensor bias = Tensor::from({1, 2, 3, 4});
  const Tensor y = normalize(x, NormKind::layer, Tensor({4}, 2.0), bias, 1e-5);
  EXPECT_EQ(y.values(), bias.values());
}

TEST(NormalizeTest, RmsOfUnitRmsInput) {
  const Tensor x({1, 1, 4}, {1, -1, 1, -1});
  const double eps = 1e-8;
  const Tensor y = normalize(x, NormKind::rms, Tensor({4}, 1.0), std::nullopt, eps);
  EXPECT_LT(max_abs_diff(x, y), eps);
  EXPECT_THROW(normalize(x, NormKind::rms, Tensor({4}, 1.0), std::nullopt, 0.0), DomainError);
}

TEST(ReverseTimeTest, ReversesAndIsInvolution) {
  const Tensor x({1, 3, 1}, {1, 2, 3});
  EXPECT_EQ(reverse_time(x).values(), (std::vector<double>{3, 2, 1}));
  const Tensor pal({1, 3, 1}, {4, 7, 4});
  EXPECT_EQ(reverse_time(pal), pal);
  std::mt19937_64 rng(7);
  for (const Shape& s : {Shape{1, 1}, Shape{2, 5}, Shape{2, 7, 3}, Shape{3, 4, 2, 5}}) {
    const Tensor t = random_tensor(s, rng);
    EXPECT_EQ(reverse_time(reverse_time(t)), t);
  }
}

TEST(TensorIoTest, BinaryLayoutAndRoundTrip) {
  const Tensor t({2, 1}, {1.5, -2.0});
  const auto bytes = encode_tensor(t);
  ASSERT_EQ(bytes.size(), 4u + 2 * 4u + 2 * 8u);
  EXPECT_EQ(bytes[0], 2);
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(decode_tensor(bytes), t);

  std::mt19937_64 rng(8);
  const Tensor r = random_tensor({3, 2, 4}, rng);
  EXPECT_EQ(tensor_from_jsonl(tensor_to_jsonl(r)), r);
  EXPECT_EQ(decode_tensor(encode_tensor(r)), r);
}

TEST(TensorIoTest, TruncatedPayloadIsAnIoError) {
  auto bytes = encode_tensor(Tensor({3}, 1.0));
  bytes.pop_back();
  EXPECT_THROW(decode_tensor(bytes), IoError);
}

}  // namespace
}  // namespace bimamba
