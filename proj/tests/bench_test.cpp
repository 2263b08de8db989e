// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bimamba/bench.hpp"
#include "bimamba/error.hpp"
#include "oracle/counting_forward.hpp"
#include "test_util.hpp"

namespace bimamba {
namespace {

using testing::random_tensor;

MambaConfig mamba_for(std::size_t d) {
  MambaConfig cfg;
  cfg.d_model = d;
  cfg.d_state = 3;
  cfg.d_conv = 4;
  cfg.dt_ratio = 3;  // E = 8 -> rank 3
  cfg.a_init = AInit::random;
  return cfg;
}

BlockSpec spec_for(BlockKind kind, MixerKind mixer) {
  BlockSpec s;
  s.kind = kind;
  s.mixer = mixer;
  s.causal = mixer == MixerKind::mamba;
  s.d_model = 4;
  s.n_heads = 2;
  s.d_ff = 6;
  s.conv_kernel = 5;
  return s;
}

TEST(MacsLedgerTest, MatchesInstrumentedForwardAndOutputs) {
  const MambaConfig cfg = mamba_for(4);
  std::mt19937_64 rng(1);
  for (BlockKind kind : {BlockKind::bare_mamba, BlockKind::transformer, BlockKind::conformer}) {
    for (MixerKind mixer : {MixerKind::mhsa, MixerKind::mamba, MixerKind::inn_bimamba, MixerKind::ext_bimamba}) {
      if (kind == BlockKind::bare_mamba && mixer == MixerKind::mhsa) continue;
      for (bool macaron : {true, false}) {
        BlockSpec spec = spec_for(kind, mixer);
        spec.use_macaron = macaron;
        const LayerParams p = init_layer(spec, cfg, rng);
        for (std::size_t L : {1u, 6u, 11u}) {
          const Tensor H = random_tensor({1, L, 4}, rng);
          oracle::Counter counter;
          const oracle::Mat ref = oracle::layer(counter, H.values(), L, p, spec, cfg);
          EXPECT_EQ(counter.n, count_macs(spec, cfg, L))
              << block_kind_name(kind) << "/" << mixer_kind_name(mixer) << " L=" << L;
          ad::Tape tape(ad::GradMode::inference);
          const Tensor got = layer_forward(tape.constant(H), bind(tape, p), spec, cfg).value();
          EXPECT_LT(max_abs_diff(got, Tensor(H.shape(), ref)), 1e-12);
        }
      }
    }
  }
}

TEST(MacsLedgerTest, CausalAttentionCountedDense) {
  const MambaConfig cfg = mamba_for(4);
  BlockSpec spec = spec_for(BlockKind::transformer, MixerKind::mhsa);
  spec.causal = true;
  std::mt19937_64 rng(2);
  const LayerParams p = init_layer(spec, cfg, rng);
  const Tensor H = random_tensor({1, 7, 4}, rng);
  oracle::Counter counter;
  const oracle::Mat ref = oracle::layer(counter, H.values(), 7, p, spec, cfg);
  EXPECT_EQ(counter.n, count_macs(spec, cfg, 7));
  EXPECT_LT(max_abs_diff(transformer_layer_forward(H, spec, cfg, p), Tensor(H.shape(), ref)), 1e-12);
}

TEST(MacsLedgerTest, ScalingExamples) {
  const MambaConfig cfg = mamba_for(16);
  // Quadratic term dominates for large L.
  const double r = static_cast<double>(mhsa_macs(1 << 16, 16)) / static_cast<double>(mhsa_macs(1 << 15, 16));
  EXPECT_NEAR(r, 4.0, 0.01);
  for (MambaVariant v : {MambaVariant::mamba, MambaVariant::inn, MambaVariant::ext}) {
    EXPECT_EQ(mamba_variant_macs(v, cfg, 2048), 2 * mamba_variant_macs(v, cfg, 1024));
  }
  const std::uint64_t D = 16, E = 32;
  for (std::size_t L : {1u, 100u, 4096u}) {
    EXPECT_EQ(mamba_variant_macs(MambaVariant::ext, cfg, L) - mamba_variant_macs(MambaVariant::inn, cfg, L),
              L * (2 * D * E + E * D));
  }
  double prev = 0.0;
  for (std::size_t L = 1024; L <= 16384; L *= 2) {
    const double ratio = static_cast<double>(mhsa_macs(L, 16)) /
                         static_cast<double>(mamba_variant_macs(MambaVariant::mamba, cfg, L));
    EXPECT_GT(ratio, prev);
    prev = ratio;
  }
}

TEST(FitSlopeTest, ExactPowerLaws) {
  const std::vector<double> L{1024, 2048, 4096, 8192, 16384};
  std::vector<double> quad, lin;
  for (double l : L) {
    quad.push_back(3e-7 * l * l);
    lin.push_back(0.02 * l);
  }
  const SlopeFit q = fit_slope(L, quad);
  EXPECT_NEAR(q.slope, 2.0, 1e-9);
  EXPECT_NEAR(q.r2, 1.0, 1e-12);
  EXPECT_NEAR(fit_slope(L, lin).slope, 1.0, 1e-9);
  EXPECT_THROW(fit_slope(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), DomainError);
  EXPECT_THROW(fit_slope(std::vector<double>{4, 4, 4, 4}, std::vector<double>{1, 2, 3, 4}), DomainError);
  EXPECT_THROW(fit_slope(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 0, 3, 4}), DomainError);
}

TEST(TimeScalingTest, SmallRunRecordsBookkeeping) {
  MambaConfig cfg = mamba_for(8);
  ScalingOptions opt;
  opt.parallel_row = true;
  opt.parallel_chunk = 16;
  const CostReport report = time_scaling({"mhsa", "mamba", "ext_bimamba"}, {32, 64, 128, 256, 512}, cfg, 3, opt);
  ASSERT_EQ(report.rows.size(), 20u);
  ASSERT_EQ(report.fits.size(), 3u);
  for (const CostRow& row : report.rows) {
    EXPECT_EQ(row.reps, 5u);
    EXPECT_EQ(row.warmups, 2u);
    EXPECT_FALSE(row.skipped);
    EXPECT_GT(row.wall_ms, 0.0);
  }
  EXPECT_EQ(report.rows[0].macs, mhsa_macs(32, 8));
  EXPECT_EQ(report.rows.back().mixer, "mamba_parallel");
  const std::string csv = cost_report_csv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "mixer,L,macs,wall_ms,reps,slope_group");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
}

TEST(TimeScalingTest, RejectsBadLengths) {
  const MambaConfig cfg = mamba_for(8);
  EXPECT_THROW(time_scaling({"mamba"}, {8, 16, 32}, cfg, 1), ConfigError);
  EXPECT_THROW(time_scaling({"mamba"}, {8, 16, 32, 64}, cfg, 1), ConfigError);  // spans 8x
  EXPECT_THROW(time_scaling({"mamba"}, {64, 32, 16, 1024}, cfg, 1), ConfigError);
  EXPECT_THROW(time_scaling({"rnn"}, {8, 16, 32, 128}, cfg, 1), ConfigError);
}

}  // namespace
}  // namespace bimamba
