// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Two desk-scale studies: a 2-D classification task probing how much an FFN
// sublayer adds on top of a bidirectional Mamba mixer, and a synthetic
// spectral-mask denoiser comparing mixers at a matched parameter budget.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bimamba/audio.hpp"
#include "bimamba/blocks.hpp"
#include "bimamba/report.hpp"
#include "bimamba/tensor.hpp"

namespace bimamba {

// ---- 2-D classification ----------------------------------------------------

enum class DatasetKind { gaussians, spirals };
DatasetKind parse_dataset_kind(std::string_view name);
std::string dataset_kind_name(DatasetKind kind);

struct Dataset2D {
  Tensor points;  // [M, 2]
  Tensor labels;  // [M], 0 or 1
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Exactly n/2 points per class, shuffled, first (1 - test_fraction) of the
// shuffle is the training split. Spiral arms reach radius spiral_scale before
// noise (sigma 0.2, not scaled). Throws DomainError if n is odd or < 4.
Dataset2D gen_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed, double test_fraction = 0.2,
                      double spiral_scale = 1.0);

struct BoundaryConfig {
  DatasetKind kind = DatasetKind::gaussians;
  bool with_ffn = false;
  std::size_t n = 800;
  std::size_t epochs = 100;  // full-batch steps
  double lr = 0.01;
  std::size_t grid = 100;
  double margin = 0.1;  // fraction of the data extent added on every side
  double spiral_scale = 1.0;
  std::size_t d_model = 16;
  std::size_t d_state = 16;
  std::size_t d_ff = 64;

  void validate() const;
  nlohmann::json to_json() const;
};

struct DecisionGrid {
  std::size_t resolution = 0;
  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  std::vector<double> xs;     // row-major, y outer
  std::vector<double> ys;
  std::vector<double> score;  // P(label = 1)
  std::vector<int> pred;
};

struct BoundaryResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> loss;  // one entry per epoch
  bool diverged = false;
  std::size_t param_count = 0;
  DecisionGrid grid;
};

// The point (x, y) becomes the sequence [x, y] of length 2 with one feature
// per step; the classifier is one ExtBiMamba layer, alone or in a
// transformer-style shell with an FFN, mean-pooled into a logit.
ModelSpec boundary_model_spec(const BoundaryConfig& cfg);
// Parameters are returned through `trained` when non-null.
BoundaryResult run_boundary_experiment(const BoundaryConfig& cfg, std::uint64_t seed, ModelParams* trained = nullptr);
// Evaluates a classifier on a resolution x resolution grid over the data box widened by margin.
DecisionGrid decision_grid(const ModelSpec& spec, const ModelParams& params, const Dataset2D& ds,
                           std::size_t resolution, double margin);
RunReport boundary_report(const BoundaryConfig& cfg, std::uint64_t seed, const BoundaryResult& result);

std::string grid_csv(const DecisionGrid& grid);  // header x,y,pred,score
// Binary PPM: blue for class 0, red for class 1, shaded by confidence; data points drawn dark.
std::string grid_ppm(const DecisionGrid& grid, const Dataset2D* overlay = nullptr);

// ---- toy denoiser ----------------------------------------------------------

struct SpectralPair {
  Tensor noisy_mag;  // [frames, bins]
  Tensor clean_mag;
  Tensor phase;  // noisy phase
  std::vector<double> clean;  // time-domain signals
  std::vector<double> noisy;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

constexpr double kSampleRate = 16000.0;

// Clean: three amplitude-modulated sinusoids. Noise: white Gaussian scaled so
// the time-domain SNR equals snr_db. Throws DomainError if dur_s < 0.5.
SpectralPair gen_noisy_mixture(std::uint64_t seed, double snr_db, double dur_s = 1.0, const StftConfig& stft_cfg = {});

// 10 log10(sum ref^2 / sum (ref - est)^2) over [begin, end).
double snr_db(std::span<const double> ref, std::span<const double> est, std::size_t begin, std::size_t end);

// Applies a [frames, bins] mask to the noisy magnitude, resynthesises with the
// noisy phase and returns output SNR minus input SNR on the STFT interior.
double snr_improvement(const SpectralPair& pair, const Tensor& mask, const StftConfig& stft_cfg = {});

// clamp(clean / noisy, 0, 1), 1 where the noisy magnitude is zero.
Tensor oracle_mask(const SpectralPair& pair);

struct DenoiseConfig {
  std::vector<MixerKind> mixers{MixerKind::mhsa, MixerKind::mamba, MixerKind::ext_bimamba};
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t d_state = 16;
  // Budget reference: one ExtBiMamba transformer-style layer with this FFN width.
  std::size_t reference_d_ff = 64;
  std::size_t max_depth = 6;
  double budget_tolerance = 0.05;
  std::size_t steps = 1000;
  std::size_t batch = 8;
  std::size_t warmup_steps = 100;
  double lr_scale = 1.0;
  double alpha = 0.3;
  double dur_s = 1.0;
  double train_snr_lo = -5.0;
  double train_snr_hi = 10.0;
  double test_snr = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
};

// Block layout for one arm. Only mamba is causal.
struct DenoiseArm {
  MixerKind mixer = MixerKind::mhsa;
  ModelSpec model;
  std::size_t stack_params = 0;  // layers only; embedding and head are shared by all arms
  double budget_deviation = 0.0;
};

// Chooses depth and FFN width for each mixer so the layer stack is as close
// as possible to the reference budget. Smaller depth wins ties.
std::vector<DenoiseArm> match_budgets(const DenoiseConfig& cfg);

struct ArmOutcome {
  DenoiseArm arm;
  std::size_t total_params = 0;
  double improvement_db = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
  std::vector<double> loss;
};

struct DenoiseResult {
  std::vector<ArmOutcome> arms;
  std::size_t reference_budget = 0;
  double input_snr_db = 0.0;
  double identity_improvement_db = 0.0;
  double oracle_improvement_db = 0.0;
};

// Mask model: Linear(bins -> D), layer stack, Linear(D -> bins), sigmoid.
// Input features are the power-law compressed noisy magnitude.
DenoiseResult run_denoise_experiment(const DenoiseConfig& cfg, std::size_t n_train, std::size_t n_test,
                                     std::uint64_t seed);
RunReport denoise_report(const DenoiseConfig& cfg, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                         const DenoiseResult& result);

// Mask produced by a trained (or forced) model for one pair.
Tensor predict_mask(const ModelSpec& spec, const ModelParams& params, const SpectralPair& pair, double alpha);

}  // namespace bimamba
