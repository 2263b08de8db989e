// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <set>

#include "bimamba/error.hpp"
#include "bimamba/experiments.hpp"

namespace bimamba {
namespace {

std::vector<double> noise_signal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

// ---- STFT ------------------------------------------------------------------

TEST(StftTest, FrameCountAndZeros) {
  const std::vector<double> z(1024, 0.0);
  const Spectrogram s = stft(z);
  EXPECT_EQ(s.frames, 3u);
  EXPECT_EQ(s.bins, 257u);
  for (double m : s.magnitude().values()) EXPECT_EQ(m, 0.0);
  EXPECT_EQ(stft(std::vector<double>(512, 0.0)).frames, 1u);
  EXPECT_EQ(stft(std::vector<double>(767, 0.0)).frames, 1u);
  EXPECT_THROW(stft(std::vector<double>(511, 0.0)), DomainError);
}

TEST(StftTest, MatchesDirectDft) {
  const std::vector<double> x = noise_signal(900, 3);
  const Spectrogram s = stft(x);
  const std::vector<double> w = sqrt_hann(512);
  ASSERT_EQ(s.frames, 2u);
  for (std::size_t f = 0; f < s.frames; ++f) {
    for (std::size_t k = 0; k < 257; k += 17) {
      std::complex<double> acc = 0.0;
      for (std::size_t n = 0; n < 512; ++n) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * n) / 512.0;
        acc += x[f * 256 + n] * w[n] * std::polar(1.0, ang);
      }
      EXPECT_LT(std::abs(acc - s.data[f * 257 + k]), 1e-9) << "frame " << f << " bin " << k;
    }
  }
}

TEST(StftTest, BinCentredSineConcentratesInMainLobe) {
  const std::size_t k0 = 40;
  std::vector<double> x(512);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(2.0 * std::numbers::pi * k0 * n / 512.0);
  const Tensor m = stft(x).magnitude();
  double total = 0.0;
  for (double v : m.values()) total += v * v;
  const double centre = m[k0] * m[k0] / total;
  const double lobe = (m[k0 - 1] * m[k0 - 1] + m[k0] * m[k0] + m[k0 + 1] * m[k0 + 1]) / total;
  // Sine window: the centre bin holds 8/pi^2 (about 81%); the two neighbours lift the main lobe just past 90%.
  EXPECT_NEAR(centre, 8.0 / (std::numbers::pi * std::numbers::pi), 1e-3);
  EXPECT_GE(lobe, 0.90);
}

TEST(StftTest, RoundTripInterior) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t len = 512 + 37 * seed + 256 * (seed % 5);
    const std::vector<double> x = noise_signal(len, seed);
    const Spectrogram s = stft(x);
    const std::vector<double> y = istft(s);
    ASSERT_EQ(y.size(), (s.frames - 1) * 256 + 512);
    const auto [lo, hi] = interior_range(s.frames);
    double err = 0.0;
    for (std::size_t i = lo; i < hi; ++i) err = std::max(err, std::abs(x[i] - y[i]));
    EXPECT_LT(err, 1e-8) << "len " << len;
  }
}

TEST(StftTest, ZeroSpectrogramAndMismatch) {
  Spectrogram s;
  s.frames = 4;
  s.bins = 257;
  s.data.assign(4 * 257, 0.0);
  for (double v : istft(s)) EXPECT_EQ(v, 0.0);
  StftConfig other;
  other.win = 256;
  other.hop = 128;
  EXPECT_THROW(istft(s, other), DimensionError);
  other.win = 511;
  EXPECT_THROW(stft(std::vector<double>(2000, 0.0), other), ConfigError);
}

TEST(StftTest, PolarRoundTrip) {
  const Spectrogram s = stft(noise_signal(1300, 9));
  const Spectrogram t = Spectrogram::from_polar(s.magnitude(), s.phase());
  for (std::size_t i = 0; i < s.data.size(); ++i) EXPECT_LT(std::abs(s.data[i] - t.data[i]), 1e-9);
  EXPECT_THROW(Spectrogram::from_polar(Tensor({2, 3}), Tensor({3, 2})), DimensionError);
}

TEST(PowerLawTest, Examples) {
  const Tensor m = Tensor::from({0.0, 16.0, 2.5});
  const Tensor id = power_law_compress(m, 1.0);
  EXPECT_EQ(id.values(), m.values());
  const Tensor h = power_law_compress(m, 0.5);
  EXPECT_EQ(h[0], 0.0);
  EXPECT_DOUBLE_EQ(h[1], 4.0);
  EXPECT_NEAR(power_law_compress(m)[1], std::pow(16.0, 0.3), 1e-15);
  EXPECT_THROW(power_law_compress(Tensor::from({-1e-3})), DomainError);
  EXPECT_THROW(power_law_compress(m, 0.0), DomainError);
  EXPECT_THROW(power_law_compress(m, 1.5), DomainError);
}

// ---- datasets --------------------------------------------------------------

TEST(DatasetTest, SplitAndBalance) {
  for (DatasetKind kind : {DatasetKind::gaussians, DatasetKind::spirals}) {
    const Dataset2D ds = gen_dataset(kind, 800, 5);
    EXPECT_EQ(ds.train.size(), 640u);
    EXPECT_EQ(ds.test.size(), 160u);
    std::set<std::size_t> all(ds.train.begin(), ds.train.end());
    all.insert(ds.test.begin(), ds.test.end());
    EXPECT_EQ(all.size(), 800u);
    double ones = 0.0;
    for (double l : ds.labels.values()) {
      EXPECT_TRUE(l == 0.0 || l == 1.0);
      ones += l;
    }
    EXPECT_EQ(ones, 400.0);
  }
  EXPECT_THROW(gen_dataset(DatasetKind::gaussians, 801, 1), DomainError);
}

TEST(DatasetTest, GaussianMeans) {
  const Dataset2D ds = gen_dataset(DatasetKind::gaussians, 20000, 11);
  double sum[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < 20000; ++i) {
    const int c = ds.labels[i] > 0.5 ? 1 : 0;
    sum[c][0] += ds.points[2 * i];
    sum[c][1] += ds.points[2 * i + 1];
  }
  for (int c = 0; c < 2; ++c) {
    const double centre = c == 1 ? 2.0 : -2.0;
    EXPECT_NEAR(sum[c][0] / 10000.0, centre, 0.1);
    EXPECT_NEAR(sum[c][1] / 10000.0, centre, 0.1);
  }
}

TEST(DatasetTest, SpiralGeometry) {
  // Noise-free radius is at most the scale; 0.2 sigma noise keeps nearly all points within scale + 1.
  const Dataset2D ds = gen_dataset(DatasetKind::spirals, 2000, 2);
  std::size_t outside = 0;
  for (std::size_t i = 0; i < 2000; ++i) outside += std::hypot(ds.points[2 * i], ds.points[2 * i + 1]) > 2.0;
  EXPECT_EQ(outside, 0u);
  const Dataset2D big = gen_dataset(DatasetKind::spirals, 2000, 2, 0.2, 5.0);
  double r_max = 0.0;
  for (std::size_t i = 0; i < 2000; ++i) r_max = std::max(r_max, std::hypot(big.points[2 * i], big.points[2 * i + 1]));
  EXPECT_GT(r_max, 4.5);
}

TEST(DatasetTest, Deterministic) {
  const Dataset2D a = gen_dataset(DatasetKind::spirals, 200, 42);
  const Dataset2D b = gen_dataset(DatasetKind::spirals, 200, 42);
  const Dataset2D c = gen_dataset(DatasetKind::spirals, 200, 43);
  EXPECT_EQ(a.points.values(), b.points.values());
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(a.points.values(), c.points.values());
}

// ---- boundary study --------------------------------------------------------

TEST(BoundaryTest, SmallRunShapesAndDeterminism) {
  BoundaryConfig cfg;
  cfg.n = 60;
  cfg.epochs = 3;
  cfg.grid = 12;
  cfg.with_ffn = true;
  const BoundaryResult a = run_boundary_experiment(cfg, 4);
  const BoundaryResult b = run_boundary_experiment(cfg, 4);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grid.score, b.grid.score);
  EXPECT_EQ(a.loss.size(), 3u);
  ASSERT_EQ(a.grid.score.size(), 144u);
  EXPECT_EQ(a.param_count, model_param_count(boundary_model_spec(cfg)));
  for (std::size_t i = 0; i < 144; ++i) {
    EXPECT_EQ(a.grid.pred[i], a.grid.score[i] > 0.5 ? 1 : 0);
  }
  // Grid spans the data box plus 10% on each side.
  const Dataset2D ds = gen_dataset(cfg.kind, cfg.n, 4);
  double x_lo = 1e9, x_hi = -1e9;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    x_lo = std::min(x_lo, ds.points[2 * i]);
    x_hi = std::max(x_hi, ds.points[2 * i]);
  }
  EXPECT_NEAR(a.grid.x_lo, x_lo - 0.1 * (x_hi - x_lo), 1e-12);
  EXPECT_NEAR(a.grid.xs.back(), x_hi + 0.1 * (x_hi - x_lo), 1e-12);

  const std::string csv = grid_csv(a.grid);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 145);
  EXPECT_EQ(csv.substr(0, 15), "x,y,pred,score\n");
  const std::string ppm = grid_ppm(a.grid, &ds);
  EXPECT_EQ(ppm.substr(0, 13), "P6\n12 12\n255\n");
  EXPECT_EQ(ppm.size(), 13u + 3u * 144u);

  const RunReport rep = boundary_report(cfg, 4, a);
  EXPECT_EQ(rep.to_json()["config"]["classifier"], "BiMamba+FFN");
  EXPECT_EQ(rep.dump(), boundary_report(cfg, 4, b).dump());
}

TEST(BoundaryTest, ModelSpecs) {
  BoundaryConfig cfg;
  const ModelSpec bare = boundary_model_spec(cfg);
  EXPECT_EQ(bare.block.kind, BlockKind::bare_mamba);
  EXPECT_EQ(bare.block.mixer, MixerKind::ext_bimamba);
  EXPECT_TRUE(bare.pool_mean);
  cfg.with_ffn = true;
  const ModelSpec ffn = boundary_model_spec(cfg);
  EXPECT_EQ(ffn.block.kind, BlockKind::transformer);
  EXPECT_EQ(ffn.block.ffn_activation(), Activation::relu);
  EXPECT_EQ(model_param_count(ffn) - model_param_count(bare), ffn_param_count(16, 64));
  cfg.grid = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(BoundaryTest, GaussiansSeparated) {
  BoundaryConfig cfg;
  const BoundaryResult r = run_boundary_experiment(cfg, 0);
  EXPECT_FALSE(r.diverged);
  EXPECT_GE(r.test_accuracy, 0.95);
  EXPECT_EQ(r.grid.score.size(), 10000u);
}

// ---- denoiser --------------------------------------------------------------

TEST(MixtureTest, AchievedSnrAndShapes) {
  for (double snr : {-10.0, 0.0, 7.5, 20.0}) {
    const SpectralPair p = gen_noisy_mixture(17, snr, 0.75);
    ASSERT_EQ(p.clean.size(), 12000u);
    double s = 0.0, n = 0.0;
    for (std::size_t i = 0; i < p.clean.size(); ++i) {
      s += p.clean[i] * p.clean[i];
      n += (p.noisy[i] - p.clean[i]) * (p.noisy[i] - p.clean[i]);
    }
    EXPECT_NEAR(10.0 * std::log10(s / n), snr, 0.1);
    EXPECT_EQ(p.noisy_mag.shape(), (Shape{45, 257}));
    EXPECT_EQ(p.clean_mag.shape(), p.noisy_mag.shape());
    for (double v : p.noisy_mag.values()) EXPECT_GE(v, 0.0);
  }
  EXPECT_THROW(gen_noisy_mixture(1, 0.0, 0.4), DomainError);
}

TEST(MixtureTest, VanishingNoiseAndReproducible) {
  const SpectralPair p = gen_noisy_mixture(3, 60.0);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.clean_mag.size(); ++i) {
    num += (p.noisy_mag[i] - p.clean_mag[i]) * (p.noisy_mag[i] - p.clean_mag[i]);
    den += p.clean_mag[i] * p.clean_mag[i];
  }
  EXPECT_LT(std::sqrt(num / den), 0.05);
  const SpectralPair q = gen_noisy_mixture(3, 60.0);
  EXPECT_EQ(p.noisy, q.noisy);
  EXPECT_EQ(p.noisy_mag.values(), q.noisy_mag.values());
}

TEST(MixtureTest, IdentityAndOracleMasks) {
  const SpectralPair p = gen_noisy_mixture(8, 0.0);
  EXPECT_NEAR(snr_improvement(p, Tensor(p.noisy_mag.shape(), 1.0)), 0.0, 1e-9);
  const Tensor oracle = oracle_mask(p);
  for (double v : oracle.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_GT(snr_improvement(p, oracle), 5.0);
  EXPECT_THROW(snr_improvement(p, Tensor({3, 257}, 1.0)), DimensionError);
  // Hand value of the SNR helper.
  const std::vector<double> ref{1.0, 2.0}, est{1.0, 1.0};
  EXPECT_NEAR(snr_db(ref, est, 0, 2), 10.0 * std::log10(5.0), 1e-12);
}

TEST(DenoiseTest, BudgetsMatched) {
  const DenoiseConfig cfg;
  const std::vector<DenoiseArm> arms = match_budgets(cfg);
  ASSERT_EQ(arms.size(), 3u);
  const std::size_t target = arms[2].stack_params;
  EXPECT_EQ(arms[2].mixer, MixerKind::ext_bimamba);
  EXPECT_EQ(arms[2].budget_deviation, 0.0);
  for (const DenoiseArm& a : arms) {
    EXPECT_LE(std::abs(a.budget_deviation), 0.05);
    EXPECT_EQ(a.stack_params, a.model.depth * layer_param_count(a.model.block, a.model.mamba));
    EXPECT_NEAR(static_cast<double>(a.stack_params) / static_cast<double>(target), 1.0, 0.05);
    EXPECT_EQ(a.model.block.causal, a.mixer == MixerKind::mamba);
    EXPECT_EQ(a.model.d_in, 257u);
    EXPECT_EQ(a.model.d_out, 257u);
  }
}

TEST(DenoiseTest, TinyRunReport) {
  DenoiseConfig cfg;
  cfg.steps = 3;
  cfg.batch = 2;
  cfg.warmup_steps = 2;
  cfg.dur_s = 0.5;
  const DenoiseResult a = run_denoise_experiment(cfg, 4, 2, 21);
  const DenoiseResult b = run_denoise_experiment(cfg, 4, 2, 21);
  ASSERT_EQ(a.arms.size(), 3u);
  EXPECT_NEAR(a.identity_improvement_db, 0.0, 1e-6);
  EXPECT_GT(a.oracle_improvement_db, 5.0);
  EXPECT_NEAR(a.input_snr_db, 0.0, 0.5);
  for (const ArmOutcome& arm : a.arms) {
    EXPECT_EQ(arm.loss.size(), 3u);
    EXPECT_FALSE(arm.diverged);
    EXPECT_TRUE(std::isfinite(arm.improvement_db));
  }
  const std::string ra = denoise_report(cfg, 4, 2, 21, a).dump();
  EXPECT_EQ(ra, denoise_report(cfg, 4, 2, 21, b).dump());
  EXPECT_NE(ra.find("\"oracle_improvement_db\""), std::string::npos);
  EXPECT_THROW(run_denoise_experiment(cfg, 0, 2, 1), ConfigError);
}

TEST(ReportTest, ChecksAndTimingsExcluded) {
  RunReport r;
  r.command = "x";
  r.seed = 5;
  r.timings["wall_s"] = 1.25;
  r.check("ok", true);
  EXPECT_TRUE(r.passed());
  r.check("bad", false, "detail");
  EXPECT_FALSE(r.passed());
  const nlohmann::json j = r.to_json();
  EXPECT_FALSE(j.contains("timings"));
  EXPECT_EQ(j["failures"][0], "bad: detail");
  EXPECT_EQ(j["metrics"]["checks"]["ok"], true);
  EXPECT_EQ(r.dump().back(), '\n');
}

}  // namespace
}  // namespace bimamba
