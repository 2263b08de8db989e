// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Bidirectional Mamba layers.
//
// InnBiMamba shares the input projections (W_x, W_z) and the output projection
// between directions; each direction owns its conv and SSM internals. The
// backward branch scans the time-reversed x and its output is reversed back
// before the shared SiLU(z) gate:
//
//   out = (y_fwd * SiLU(z) + y_bwd * SiLU(z)) W_out + H
//
// ExtBiMamba runs two complete Mamba paths with their own projections; the
// backward path sees the time-reversed normalized input:
//
//   out = path_fwd(H') + reverse(path_bwd(reverse(H'))) + H

#pragma once

#include <cstdint>
#include <string_view>

#include "bimamba/mamba.hpp"

namespace bimamba {

template <class T>
struct InnBiMambaWeights {
  T norm_gain;  // [D]
  T W_x;        // [D, E], shared
  T W_z;        // [D, E], shared
  T W_out;      // [E, D], shared
  SsmBranchWeights<T> fwd;
  SsmBranchWeights<T> bwd;

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    f(p + "norm_gain" + s, w.norm_gain);
    f(p + "W_x" + s, w.W_x);
    f(p + "W_z" + s, w.W_z);
    SsmBranchWeights<T>::fields(w.fwd, p, "_fwd" + s, f);
    SsmBranchWeights<T>::fields(w.bwd, p, "_bwd" + s, f);
    f(p + "W_out" + s, w.W_out);
  }
};

template <class T>
struct ExtBiMambaWeights {
  T norm_gain;  // [D]
  MambaPathWeights<T> fwd;
  MambaPathWeights<T> bwd;

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    f(p + "norm_gain" + s, w.norm_gain);
    MambaPathWeights<T>::fields(w.fwd, p, "_fwd" + s, f);
    MambaPathWeights<T>::fields(w.bwd, p, "_bwd" + s, f);
  }
};

using InnBiMambaParams = InnBiMambaWeights<Tensor>;
using ExtBiMambaParams = ExtBiMambaWeights<Tensor>;

InnBiMambaParams init_inn_params(const MambaConfig& cfg, std::uint64_t seed);
ExtBiMambaParams init_ext_params(const MambaConfig& cfg, std::uint64_t seed);

ad::Var inn_bimamba_forward(const ad::Var& H, const InnBiMambaWeights<ad::Var>& w, const MambaConfig& cfg);
ad::Var ext_bimamba_forward(const ad::Var& H, const ExtBiMambaWeights<ad::Var>& w, const MambaConfig& cfg);
Tensor inn_bimamba_forward(const Tensor& H, const InnBiMambaParams& p, const MambaConfig& cfg);
Tensor ext_bimamba_forward(const Tensor& H, const ExtBiMambaParams& p, const MambaConfig& cfg);

// Exchanges the per-direction weights.
InnBiMambaParams swap_directions(const InnBiMambaParams& p);
ExtBiMambaParams swap_directions(const ExtBiMambaParams& p);

enum class MambaVariant { mamba, inn, ext };
MambaVariant parse_mamba_variant(std::string_view name);
std::string_view mamba_variant_name(MambaVariant v);

// Exact learnable-scalar count from the closed-form ledger.
std::size_t param_count(MambaVariant variant, const MambaConfig& cfg);
// Count by enumerating the tensors of freshly initialized weights.
std::size_t enumerated_param_count(MambaVariant variant, const MambaConfig& cfg);

}  // namespace bimamba
