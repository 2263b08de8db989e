// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Unidirectional Mamba layer:
//
//   H' = RMSNorm(H)
//   x  = H' W_x,  z = H' W_z
//   x' = SiLU(CausalConv1d(x))
//   B  = x' W_B,  C = x' W_C,  delta = softplus(x' W_1 W_2 + delta_bias)
//   y  = SelectiveScan(x', delta, A = -exp(A_log), B, C, D_skip)
//   out = (y * SiLU(z)) W_out + H

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "bimamba/autodiff.hpp"
#include "bimamba/ssm.hpp"
#include "bimamba/tensor.hpp"
#include "bimamba/weights.hpp"

namespace bimamba {

enum class AInit { real_diagonal, random, gaussian_perturbed };

AInit parse_a_init(std::string_view name);
std::string_view a_init_name(AInit mode);

struct MambaConfig {
  std::size_t d_model = 16;   // D
  std::size_t expand = 2;     // E_f; E = E_f * D
  std::size_t d_state = 16;   // N
  std::size_t d_conv = 4;     // local convolution width
  std::size_t dt_ratio = 16;  // r; the delta projection rank is ceil(E / r)
  AInit a_init = AInit::gaussian_perturbed;
  double a_noise_sigma = 0.1;
  // 0 runs the sequential scan; otherwise the chunked parallel scan.
  std::size_t scan_chunk = 0;
  double norm_eps = 1e-5;

  std::size_t d_inner() const { return expand * d_model; }
  std::size_t dt_rank() const { return (d_inner() + dt_ratio - 1) / dt_ratio; }

  // Throws ConfigError when any extent is zero.
  void validate() const;
};

// Everything between the input projection and the gate: conv, parameter
// generation and the scan of one direction.
template <class T>
struct SsmBranchWeights {
  T conv_w;      // [E, d_conv]
  T conv_b;      // [E]
  T W_B;         // [E, N]
  T W_C;         // [E, N]
  T W_1;         // [E, R]
  T W_2;         // [R, E]
  T delta_bias;  // [E]
  T A_log;       // [E, N], A = -exp(A_log)
  T D_skip;      // [E]

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    f(p + "conv_w" + s, w.conv_w);
    f(p + "conv_b" + s, w.conv_b);
    f(p + "W_B" + s, w.W_B);
    f(p + "W_C" + s, w.W_C);
    f(p + "W_1" + s, w.W_1);
    f(p + "W_2" + s, w.W_2);
    f(p + "delta_bias" + s, w.delta_bias);
    f(p + "A_log" + s, w.A_log);
    f(p + "D_skip" + s, w.D_skip);
  }
};

// A complete Mamba data path without the norm: projections, branch, gate and
// output projection.
template <class T>
struct MambaPathWeights {
  T W_x;    // [D, E]
  T W_z;    // [D, E]
  T W_out;  // [E, D]
  SsmBranchWeights<T> ssm;

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    f(p + "W_x" + s, w.W_x);
    f(p + "W_z" + s, w.W_z);
    SsmBranchWeights<T>::fields(w.ssm, p, s, f);
    f(p + "W_out" + s, w.W_out);
  }
};

template <class T>
struct MambaWeights {
  T norm_gain;  // [D]
  MambaPathWeights<T> path;

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    f(p + "norm_gain" + s, w.norm_gain);
    MambaPathWeights<T>::fields(w.path, p, s, f);
  }
};

using MambaParams = MambaWeights<Tensor>;

// Initializers draw from rng in field order.
SsmBranchWeights<Tensor> init_ssm_branch(const MambaConfig& cfg, std::mt19937_64& rng);
MambaPathWeights<Tensor> init_mamba_path(const MambaConfig& cfg, std::mt19937_64& rng);
MambaParams init_params(const MambaConfig& cfg, std::uint64_t seed);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrix [fan_in, fan_out].
Tensor init_linear(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

struct SelectiveParams {
  Tensor delta;  // [B, L, E]
  Tensor B;      // [B, L, N]
  Tensor C;      // [B, L, N]
};

// Input-dependent delta, B, C from the post-conv activation x'.
SelectiveParams generate_ssm_params(const Tensor& xp, const MambaParams& p);

// Tape-level building blocks shared with the bidirectional layers.
namespace layer {

struct SelectiveVars {
  ad::Var delta, B, C;
};

SelectiveVars generate_ssm_params(const ad::Var& xp, const SsmBranchWeights<ad::Var>& w);
// conv -> SiLU -> parameter generation -> scan. `x` is [B, L, E].
ad::Var ssm_branch(const ad::Var& x, const SsmBranchWeights<ad::Var>& w, const MambaConfig& cfg);
// Gated path on already-normalized input; returns the [B, L, D] update (no residual).
ad::Var mamba_path(const ad::Var& normed, const MambaPathWeights<ad::Var>& w, const MambaConfig& cfg);
ad::Var rms_norm(const ad::Var& H, const ad::Var& gain, const MambaConfig& cfg);

}  // namespace layer

ad::Var mamba_forward(const ad::Var& H, const MambaWeights<ad::Var>& w, const MambaConfig& cfg);
Tensor mamba_forward(const Tensor& H, const MambaParams& p, const MambaConfig& cfg);

// Closed-form parameter ledgers.
std::size_t ssm_branch_param_count(const MambaConfig& cfg);
std::size_t mamba_param_count(const MambaConfig& cfg);

}  // namespace bimamba
