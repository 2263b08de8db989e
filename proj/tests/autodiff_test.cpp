// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bimamba/autodiff.hpp"
#include "bimamba/error.hpp"
#include "bimamba/gradcheck.hpp"
#include "bimamba/optim.hpp"
#include "test_util.hpp"

namespace bimamba {
namespace {

using ad::Tape;
using ad::Var;
using testing::random_tensor;

constexpr double kTol = 1e-5;

double check(const LossBuilder& build, const std::vector<Tensor>& params, std::uint64_t seed = 1) {
  GradCheckOptions opts;
  opts.seed = seed;
  return check_gradients(build, params, opts).max_rel_error;
}

// Projects an arbitrary-shaped output to a scalar with fixed random weights so
// every output element carries a distinct gradient.
Var weighted_sum(const Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tape& tape = y.tape();
  const Var w = tape.constant(random_tensor(y.shape(), rng));
  return ad::sum(ad::mul(y, w));
}

TEST(TapeTest, SumGradientIsOnes) {
  Tape tape;
  const Var x = tape.parameter(Tensor({2, 3}, 0.7));
  tape.backward(ad::sum(x));
  EXPECT_EQ(tape.grad(x), Tensor({2, 3}, 1.0));
}

TEST(TapeTest, SquareGradientAtThree) {
  Tape tape;
  const Var x = tape.parameter(Tensor::scalar(3.0));
  tape.backward(ad::sum(ad::mul(x, x)));
  EXPECT_EQ(tape.grad(x).item(), 6.0);
}

TEST(TapeTest, FanOutAccumulates) {
  Tape tape;
  const Var x = tape.parameter(Tensor::from({2.0}));
  const Var y = ad::add(ad::scale(x, 3.0), ad::mul(x, x));
  tape.backward(ad::sum(y));
  EXPECT_EQ(tape.grad(x)[0], 7.0);
}

TEST(TapeTest, StructuralErrors) {
  Tape tape;
  const Var x = tape.parameter(Tensor::from({1.0, 2.0}));
  EXPECT_THROW(tape.backward(x), StructuralError);  // non-scalar
  const Var c = tape.constant(Tensor::scalar(1.0));
  EXPECT_THROW(tape.backward(c), StructuralError);  // no parameter dependence

  Tape other;
  const Var foreign = other.parameter(Tensor::from({1.0, 2.0}));
  EXPECT_THROW(ad::add(x, foreign), StructuralError);

  const Var loss = ad::sum(x);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), StructuralError);

  Tape infer(ad::GradMode::inference);
  const Var p = infer.parameter(Tensor::scalar(1.0));
  EXPECT_THROW(infer.backward(p), StructuralError);
  EXPECT_THROW(ad::sum(Var{}), StructuralError);
}

TEST(TapeTest, ReplayIsBitExact) {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  auto run = [&] {
    Tape tape;
    const Var x = tape.parameter(a);
    const Var y = ad::activation(ad::matmul(x, tape.constant(b)), Activation::softplus);
    const Var loss = ad::sum(ad::mul(y, y));
    tape.backward(loss);
    return std::make_pair(loss.value().item(), tape.grad(x));
  };
  const auto r1 = run();
  const auto r2 = run();
  EXPECT_EQ(r1.first, r2.first);
  EXPECT_EQ(r1.second, r2.second);
}

TEST(TapeTest, InferenceModeComputesSameValues) {
  std::mt19937_64 rng(4);
  const Tensor a = random_tensor({2, 5, 4}, rng);
  const Tensor g = random_tensor({4}, rng);
  Tape rec;
  Tape inf(ad::GradMode::inference);
  const Var yr = ad::normalize(rec.parameter(a), NormKind::layer, rec.parameter(g), std::nullopt, 1e-5);
  const Var yi = ad::normalize(inf.parameter(a), NormKind::layer, inf.parameter(g), std::nullopt, 1e-5);
  EXPECT_EQ(yr.value(), yi.value());
}

TEST(FiniteDiffTest, QuadraticIsExact) {
  std::mt19937_64 rng(5);
  const std::vector<Tensor> params{random_tensor({30}, rng)};
  const double err = check([](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(p[0], p[0])); }, params);
  EXPECT_LT(err, 1e-9);
}

TEST(FiniteDiffTest, SoftplusChain) {
  std::mt19937_64 rng(6);
  const std::vector<Tensor> params{random_tensor({40}, rng, -3, 3)};
  const double err = check(
      [](Tape&, std::span<const Var> p) {
        const Var a = ad::activation(p[0], Activation::softplus);
        return ad::sum(ad::activation(ad::scale(a, 1.7), Activation::softplus));
      },
      params);
  EXPECT_LT(err, 1e-6);
}

TEST(FiniteDiffTest, NonFiniteIsEvaluationError) {
  const ScalarFn f = [](const std::vector<Tensor>&) { return std::nan(""); };
  EXPECT_THROW(finite_diff_check(f, {Tensor({1}, 1.0)}, {Tensor({1}, 0.0)}, {}), EvaluationError);
}

TEST(OpGradTest, MatmulAndBroadcasts) {
  std::mt19937_64 rng(7);
  const std::vector<Tensor> params{random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng),
                                   random_tensor({5}, rng)};
  EXPECT_LT(check(
                [](Tape&, std::span<const Var> p) {
                  const Var y = ad::mul_lastdim(ad::add_lastdim(ad::matmul(p[0], p[1]), p[2]), p[3]);
                  return weighted_sum(y, 11);
                },
                params),
            kTol);
}

TEST(OpGradTest, ElementwiseArithmetic) {
  std::mt19937_64 rng(8);
  const std::vector<Tensor> params{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
  EXPECT_LT(check(
                [](Tape&, std::span<const Var> p) {
                  const Var y = ad::sub(ad::mul(p[0], p[1]), ad::neg(ad::exp(ad::scale(p[0], 0.5))));
                  return weighted_sum(ad::add(y, p[1]), 12);
                },
                params),
            kTol);
}

TEST(OpGradTest, EveryActivation) {
  std::mt19937_64 rng(9);
  for (Activation kind :
       {Activation::silu, Activation::swish, Activation::sigmoid, Activation::softplus, Activation::relu}) {
    // Keep relu inputs away from the kink.
    Tensor x = random_tensor({25}, rng, -3, 3);
    for (double& v : x.data())
      if (std::abs(v) < 0.05) v += 0.1;
    EXPECT_LT(check([kind](Tape&, std::span<const Var> p) { return weighted_sum(ad::activation(p[0], kind), 13); },
                    {x}),
              kTol)
        << static_cast<int>(kind);
  }
}

TEST(OpGradTest, DepthwiseConvBothModes) {
  std::mt19937_64 rng(10);
  for (bool causal : {true, false}) {
    const std::vector<Tensor> params{random_tensor({2, 7, 3}, rng), random_tensor({3, 3}, rng),
                                     random_tensor({3}, rng)};
    EXPECT_LT(check(
                  [causal](Tape&, std::span<const Var> p) {
                    return weighted_sum(ad::depthwise_conv1d(p[0], p[1], p[2], causal), 14);
                  },
                  params),
              kTol);
  }
}

TEST(OpGradTest, NormalizeBothKinds) {
  std::mt19937_64 rng(11);
  const std::vector<Tensor> params{random_tensor({2, 3, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)};
  EXPECT_LT(check(
                [](Tape&, std::span<const Var> p) {
                  return weighted_sum(ad::normalize(p[0], NormKind::layer, p[1], p[2], 1e-5), 15);
                },
                params),
            kTol);
  EXPECT_LT(check(
                [](Tape&, std::span<const Var> p) {
                  return weighted_sum(ad::normalize(p[0], NormKind::rms, p[1], std::nullopt, 1e-5), 16);
                },
                {params[0], params[1]}),
            kTol);
}

TEST(OpGradTest, ReverseReshapeMeanTimeGlu) {
  std::mt19937_64 rng(12);
  const std::vector<Tensor> params{random_tensor({2, 5, 6}, rng)};
  EXPECT_LT(check(
                [](Tape&, std::span<const Var> p) {
                  const Var g = ad::glu(ad::reverse_time(p[0]));
                  const Var m = ad::mean_time(ad::reshape(g, {2, 5, 3}));
                  return ad::add(weighted_sum(m, 17), weighted_sum(g, 18));
                },
                params),
            kTol);
}

TEST(OpGradTest, PowerAboveFloor) {
  std::mt19937_64 rng(13);
  const std::vector<Tensor> params{random_tensor({20}, rng, 0.2, 3.0)};
  EXPECT_LT(check([](Tape&, std::span<const Var> p) { return weighted_sum(ad::power(p[0], 0.3, 1e-8), 19); },
                  params),
            kTol);
}

TEST(OpGradTest, DropoutUsesFixedMask) {
  std::mt19937_64 rng(14);
  const std::vector<Tensor> params{random_tensor({4, 8}, rng)};
  EXPECT_LT(check([](Tape&, std::span<const Var> p) { return weighted_sum(ad::dropout(p[0], 0.3, 99), 20); },
                  params),
            kTol);
  Tape tape;
  const Var x = tape.parameter(Tensor({1000}, 1.0));
  const Var y = ad::dropout(x, 0.25, 5);
  std::size_t kept = 0;
  for (double v : y.value().data()) {
    if (v != 0.0) {
      EXPECT_NEAR(v, 1.0 / 0.75, 1e-15);
      ++kept;
    }
  }
  EXPECT_NEAR(static_cast<double>(kept) / 1000.0, 0.75, 0.05);
  EXPECT_EQ(ad::dropout(x, 0.0, 5).id(), x.id());
}

TEST(OpGradTest, Losses) {
  std::mt19937_64 rng(15);
  const std::vector<Tensor> params{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
  EXPECT_LT(check([](Tape&, std::span<const Var> p) { return ad::mse(p[0], p[1]); }, params), kTol);
  Tensor targets({3, 4});
  for (std::size_t i = 0; i < targets.size(); i += 2) targets[i] = 1.0;
  EXPECT_LT(check([&](Tape&, std::span<const Var> p) { return ad::bce_with_logits(p[0], targets); }, {params[0]}),
            kTol);
  EXPECT_LT(check([](Tape&, std::span<const Var> p) { return ad::mean(ad::mul(p[0], p[1])); }, params), kTol);
}

TEST(OpGradTest, BceMatchesClosedForm) {
  Tape tape;
  const Var z = tape.parameter(Tensor::from({0.0, 2.0}));
  const Var loss = ad::bce_with_logits(z, Tensor::from({1.0, 0.0}));
  const double expected = 0.5 * (std::log(2.0) + std::log1p(std::exp(2.0)));
  EXPECT_NEAR(loss.value().item(), expected, 1e-14);
}

TEST(OpGradTest, AttentionCausalAndFull) {
  std::mt19937_64 rng(16);
  for (bool causal : {false, true}) {
    const std::vector<Tensor> params{random_tensor({2, 5, 4}, rng), random_tensor({2, 5, 4}, rng),
                                     random_tensor({2, 5, 4}, rng)};
    EXPECT_LT(check(
                  [causal](Tape&, std::span<const Var> p) {
                    return weighted_sum(ad::attention(p[0], p[1], p[2], 2, causal), 21);
                  },
                  params),
              kTol);
  }
}

TEST(OpGradTest, ScanThroughTime) {
  std::mt19937_64 rng(17);
  const ssm::SsmInputs in = testing::random_ssm_inputs(1, 32, 3, 4, rng);
  const std::vector<Tensor> params{in.u, in.delta, in.A, in.B, in.C, in.D};
  for (std::size_t chunk : {0u, 5u}) {
    EXPECT_LT(check(
                  [chunk](Tape&, std::span<const Var> p) {
                    return weighted_sum(ad::selective_scan(p[0], p[1], p[2], p[3], p[4], p[5], {chunk}), 22);
                  },
                  params),
              kTol);
  }
}

TEST(ScanGradTest, SequentialAndParallelGradientsAgree) {
  std::mt19937_64 rng(18);
  const ssm::SsmInputs in = testing::random_ssm_inputs(2, 100, 4, 5, rng);
  const std::vector<Tensor> params{in.u, in.delta, in.A, in.B, in.C, in.D};
  auto grads = [&](std::size_t chunk) {
    return tape_gradients(
        [chunk](Tape&, std::span<const Var> p) {
          return weighted_sum(ad::selective_scan(p[0], p[1], p[2], p[3], p[4], p[5], {chunk}), 23);
        },
        params);
  };
  const auto seq = grads(0);
  const auto par = grads(7);
  for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_LT(max_abs_diff(seq[i], par[i]), 1e-9) << i;
}

TEST(AdamTest, ZeroGradientsLeaveParamsUnchanged) {
  std::vector<Tensor> params{Tensor::from({1.0, -2.0})};
  auto state = OptimState::for_params(params);
  adam_step(params, std::vector<Tensor>{Tensor({2})}, state, 0.1);
  EXPECT_EQ(params[0], Tensor::from({1.0, -2.0}));
  EXPECT_EQ(state.step, 1u);
}

TEST(AdamTest, FirstStepMovesByLrTimesSign) {
  std::vector<Tensor> params{Tensor::from({1.0, 1.0})};
  auto state = OptimState::for_params(params);
  adam_step(params, std::vector<Tensor>{Tensor::from({0.5, -0.25})}, state, 0.01);
  // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  EXPECT_NEAR(params[0][0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(params[0][1], 1.0 + 0.01, 1e-9);
}

TEST(AdamTest, ClipsBeforeMoments) {
  std::vector<Tensor> params{Tensor::from({0.0})};
  auto state = OptimState::for_params(params);
  adam_step(params, std::vector<Tensor>{Tensor::from({100.0})}, state, 0.01);
  EXPECT_NEAR(state.m[0][0], 0.1, 1e-15);         // (1 - 0.9) * 1
  EXPECT_NEAR(state.v[0][0], 0.02, 1e-15);        // (1 - 0.98) * 1
  EXPECT_NEAR(params[0][0], -0.01, 1e-9);
}

TEST(AdamTest, ShapeMismatchIsDimensionError) {
  std::vector<Tensor> params{Tensor::from({0.0, 1.0})};
  auto state = OptimState::for_params(params);
  EXPECT_THROW(adam_step(params, std::vector<Tensor>{Tensor::from({1.0})}, state, 0.01), DimensionError);
}

TEST(WarmupLrTest, CrossoverAndKnownValue) {
  EXPECT_NEAR(warmup_lr(40000, 256, 40000), 3.125e-4, 1e-18);
  EXPECT_NEAR(warmup_lr(100, 64, 100), 1.0 / std::sqrt(64.0 * 100.0), 1e-15);
  double prev = 0.0;
  for (int n = 1; n < 200; ++n) {
    const double lr = warmup_lr(n, 64, 200);
    EXPECT_GT(lr, prev);
    prev = lr;
  }
  EXPECT_LT(warmup_lr(400, 64, 200), warmup_lr(200, 64, 200));
  EXPECT_THROW(warmup_lr(0, 64, 200), DomainError);
  EXPECT_THROW(warmup_lr(1, 0, 200), DomainError);
  EXPECT_THROW(warmup_lr(1, 64, 0), DomainError);
}

TEST(GradNormTest, Euclidean) {
  const std::vector<Tensor> g{Tensor::from({3.0}), Tensor::from({4.0})};
  EXPECT_EQ(global_grad_norm(g), 5.0);
}

}  // namespace
}  // namespace bimamba
