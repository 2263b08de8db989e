// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Analytical MACs and wall-clock scaling of sequence mixers.
//
// MAC convention: one MAC per multiply inside a contraction (linear layers,
// convolution taps over the zero-padded input, attention scores and mixing,
// the scan's state update and readout). Elementwise work (norms, activations,
// gating, discretization, the D skip, softmax normalization) is not counted.
// Attention is counted dense even when causal.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bimamba/blocks.hpp"
#include "bimamba/mamba.hpp"

namespace bimamba {

std::uint64_t mhsa_macs(std::size_t steps, std::size_t d_model);
// Projections of one Mamba path: x, z and output.
std::uint64_t mamba_projection_macs(const MambaConfig& cfg, std::size_t steps);
// Conv, parameter generation and scan of one direction.
std::uint64_t ssm_branch_macs(const MambaConfig& cfg, std::size_t steps);
std::uint64_t mamba_variant_macs(MambaVariant variant, const MambaConfig& cfg, std::size_t steps);
std::uint64_t ffn_macs(std::size_t steps, std::size_t d_model, std::size_t d_ff);
std::uint64_t conv_module_macs(std::size_t steps, std::size_t d_model, std::size_t kernel);

std::uint64_t mixer_macs(const BlockSpec& spec, const MambaConfig& cfg, std::size_t steps);
// Whole layer: mixer plus the shell's FFN and conv sublayers.
std::uint64_t count_macs(const BlockSpec& spec, const MambaConfig& cfg, std::size_t steps);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

// Least squares of log(t) on log(L). Needs >= 4 points with distinct L and
// positive values; throws DomainError otherwise.
SlopeFit fit_slope(std::span<const double> lengths, std::span<const double> times);

struct CostRow {
  std::string mixer;
  std::size_t L = 0;
  std::uint64_t macs = 0;
  double wall_ms = 0.0;  // median over reps
  double iqr_ms = 0.0;
  std::size_t reps = 0;
  std::size_t warmups = 0;
  std::size_t threads = 1;
  bool skipped = false;
  std::string note;
};

struct MixerFit {
  std::string mixer;
  SlopeFit fit;
};

struct CostReport {
  std::vector<CostRow> rows;
  std::vector<MixerFit> fits;  // rows that were not skipped, per mixer
};

struct ScalingOptions {
  std::size_t reps = 5;
  std::size_t warmups = 2;
  std::size_t batch = 1;
  std::size_t n_heads = 2;
  // Adds a "mamba_parallel" row per length using the chunked scan with all
  // available workers. Excluded from slope checks; reported for reference.
  bool parallel_row = false;
  std::size_t parallel_chunk = 256;
};

// Mixers: mhsa, mamba, inn_bimamba, ext_bimamba. Lengths must ascend, number
// at least 4 and span at least 16x. `cfg.d_model` sets the width for all mixers.
// Timed runs are single-threaded.
CostReport time_scaling(const std::vector<std::string>& mixers, const std::vector<std::size_t>& lengths,
                        const MambaConfig& cfg, std::uint64_t seed, const ScalingOptions& options = {});

std::string cost_report_csv(const CostReport& report);

}  // namespace bimamba
