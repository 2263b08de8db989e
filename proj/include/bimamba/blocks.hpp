// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Layer shells with a pluggable sequence mixer.
//
// All shells use pre-norm residual wiring. An MHSA mixer gets its own
// layer-norm and residual; a Mamba-family mixer already normalizes and adds
// its residual internally, so the shell uses it as is.
//
//   transformer:  H = H + Mixer(LN(H));  H = H + FFN(LN(H))           FFN act: ReLU
//   conformer:    H = H + FFN1(LN(H))/2; H = H + Mixer(LN(H));
//                 H = H + Conv(H);       H = H + FFN2(LN(H))/2;  H = LN(H)
//                 (without macaron: a single full FFN after Conv)
//   bare_mamba:   H = Mixer(H)
//
// Conv(H) = pw2(act(LN(dw(GLU(pw1(LN(H))))))), depthwise width conv_kernel,
// causal when the block is causal and centered otherwise.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "bimamba/autodiff.hpp"
#include "bimamba/bimamba.hpp"
#include "bimamba/mamba.hpp"
#include "bimamba/tensor.hpp"
#include "bimamba/weights.hpp"

namespace bimamba {

enum class BlockKind { transformer, conformer, bare_mamba };
enum class MixerKind { mhsa, mamba, inn_bimamba, ext_bimamba };

BlockKind parse_block_kind(std::string_view name);
std::string_view block_kind_name(BlockKind kind);
MixerKind parse_mixer_kind(std::string_view name);
std::string_view mixer_kind_name(MixerKind kind);

struct BlockSpec {
  BlockKind kind = BlockKind::transformer;
  MixerKind mixer = MixerKind::mhsa;
  bool causal = false;
  std::size_t d_model = 16;
  std::size_t n_heads = 2;
  std::size_t d_ff = 64;
  std::size_t conv_kernel = 31;
  bool use_macaron = true;
  bool use_swish = true;
  bool use_pe = false;
  double dropout_p = 0.0;
  double norm_eps = 1e-5;

  // Throws ConfigError on inconsistent settings. `mamba` must agree on d_model
  // when the mixer is a Mamba variant.
  void validate(const MambaConfig& mamba) const;
  Activation ffn_activation() const;
};

template <class T>
struct NormWeights {
  T gain;  // [D]
  T bias;  // [D]

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    f(p + "gain" + s, w.gain);
    f(p + "bias" + s, w.bias);
  }
};

// Bias-free projections.
template <class T>
struct MhsaWeights {
  T W_q, W_k, W_v, W_o;  // [D, D]

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    f(p + "W_q" + s, w.W_q);
    f(p + "W_k" + s, w.W_k);
    f(p + "W_v" + s, w.W_v);
    f(p + "W_o" + s, w.W_o);
  }
};

template <class T>
struct FfnWeights {
  NormWeights<T> norm;
  T W_1;  // [D, d_ff]
  T b_1;  // [d_ff]
  T W_2;  // [d_ff, D]
  T b_2;  // [D]

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    NormWeights<T>::fields(w.norm, p + "norm.", s, f);
    f(p + "W_1" + s, w.W_1);
    f(p + "b_1" + s, w.b_1);
    f(p + "W_2" + s, w.W_2);
    f(p + "b_2" + s, w.b_2);
  }
};

template <class T>
struct ConvModuleWeights {
  NormWeights<T> norm;
  T pw1;    // [D, 2D]
  T pw1_b;  // [2D]
  T dw_w;   // [D, K]
  T dw_b;   // [D]
  NormWeights<T> dw_norm;
  T pw2;    // [D, D]
  T pw2_b;  // [D]

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    NormWeights<T>::fields(w.norm, p + "norm.", s, f);
    f(p + "pw1" + s, w.pw1);
    f(p + "pw1_b" + s, w.pw1_b);
    f(p + "dw_w" + s, w.dw_w);
    f(p + "dw_b" + s, w.dw_b);
    NormWeights<T>::fields(w.dw_norm, p + "dw_norm.", s, f);
    f(p + "pw2" + s, w.pw2);
    f(p + "pw2_b" + s, w.pw2_b);
  }
};

// One layer. Exactly one mixer slot is engaged; the other parts depend on the
// block kind.
template <class T>
struct LayerWeights {
  std::optional<NormWeights<T>> mixer_norm;  // MHSA only
  std::optional<MhsaWeights<T>> mhsa;
  std::optional<MambaWeights<T>> mamba;
  std::optional<InnBiMambaWeights<T>> inn;
  std::optional<ExtBiMambaWeights<T>> ext;
  std::optional<FfnWeights<T>> ffn1;
  std::optional<ConvModuleWeights<T>> conv;
  std::optional<FfnWeights<T>> ffn2;
  std::optional<NormWeights<T>> final_norm;

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    if (w.mixer_norm) NormWeights<T>::fields(*w.mixer_norm, p + "mixer_norm.", s, f);
    if (w.mhsa) MhsaWeights<T>::fields(*w.mhsa, p + "mixer.", s, f);
    if (w.mamba) MambaWeights<T>::fields(*w.mamba, p + "mixer.", s, f);
    if (w.inn) InnBiMambaWeights<T>::fields(*w.inn, p + "mixer.", s, f);
    if (w.ext) ExtBiMambaWeights<T>::fields(*w.ext, p + "mixer.", s, f);
    if (w.ffn1) FfnWeights<T>::fields(*w.ffn1, p + "ffn1.", s, f);
    if (w.conv) ConvModuleWeights<T>::fields(*w.conv, p + "conv.", s, f);
    if (w.ffn2) FfnWeights<T>::fields(*w.ffn2, p + "ffn2.", s, f);
    if (w.final_norm) NormWeights<T>::fields(*w.final_norm, p + "final_norm.", s, f);
  }

  template <class U>
  LayerWeights<U> skeleton() const {
    LayerWeights<U> out;
    if (mixer_norm) out.mixer_norm.emplace();
    if (mhsa) out.mhsa.emplace();
    if (mamba) out.mamba.emplace();
    if (inn) out.inn.emplace();
    if (ext) out.ext.emplace();
    if (ffn1) out.ffn1.emplace();
    if (conv) out.conv.emplace();
    if (ffn2) out.ffn2.emplace();
    if (final_norm) out.final_norm.emplace();
    return out;
  }
};

using LayerParams = LayerWeights<Tensor>;

LayerParams init_layer(const BlockSpec& spec, const MambaConfig& mamba, std::mt19937_64& rng);

// Dropout is active only when training with dropout_p > 0. Each sublayer
// draws its mask from a seed derived from dropout_seed and its position.
struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

ad::Var mhsa_forward(const ad::Var& H, const MhsaWeights<ad::Var>& w, std::size_t n_heads, bool causal);
Tensor mhsa_forward(const Tensor& H, const MhsaWeights<Tensor>& w, std::size_t n_heads, bool causal);

// Sublayer updates, without the residual.
ad::Var ffn_forward(const ad::Var& H, const FfnWeights<ad::Var>& w, Activation act, double eps);
ad::Var conv_module_forward(const ad::Var& H, const ConvModuleWeights<ad::Var>& w, bool causal, Activation act,
                            double eps);

ad::Var layer_forward(const ad::Var& H, const LayerWeights<ad::Var>& w, const BlockSpec& spec,
                      const MambaConfig& mamba, const ForwardOptions& opts = {});
Tensor transformer_layer_forward(const Tensor& H, const BlockSpec& spec, const MambaConfig& mamba,
                                 const LayerParams& p);
Tensor conformer_layer_forward(const Tensor& H, const BlockSpec& spec, const MambaConfig& mamba,
                               const LayerParams& p);

// pe[l, 2i] = sin(l / 10000^(2i/D)), pe[l, 2i+1] = cos(same angle).
Tensor sinusoidal_pe(std::size_t steps, std::size_t width);

// Closed-form parameter ledgers.
std::size_t ffn_param_count(std::size_t d_model, std::size_t d_ff);
std::size_t conv_module_param_count(std::size_t d_model, std::size_t kernel);
std::size_t mixer_param_count(const BlockSpec& spec, const MambaConfig& mamba);
std::size_t layer_param_count(const BlockSpec& spec, const MambaConfig& mamba);

// ---- stacked model ---------------------------------------------------------

struct ModelSpec {
  BlockSpec block;
  MambaConfig mamba;
  std::size_t depth = 1;
  std::size_t d_in = 0;   // input embedding Linear(d_in -> D); 0 feeds [B,L,D] directly
  std::size_t d_out = 0;  // output head Linear(D -> d_out); 0 returns hidden states
  bool pool_mean = false;  // mean over time before the head

  void validate() const;
};

template <class T>
struct ModelWeights {
  std::optional<T> embed_W;  // [d_in, D]
  std::optional<T> embed_b;  // [D]
  std::vector<LayerWeights<T>> layers;
  std::optional<T> head_W;  // [D, d_out]
  std::optional<T> head_b;  // [d_out]

  template <class Self, class F>
  static void fields(Self& w, const std::string& p, const std::string& s, F&& f) {
    if (w.embed_W) f(p + "embed.W" + s, *w.embed_W);
    if (w.embed_b) f(p + "embed.b" + s, *w.embed_b);
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
      LayerWeights<T>::fields(w.layers[i], p + "layers." + std::to_string(i) + ".", s, f);
    }
    if (w.head_W) f(p + "head.W" + s, *w.head_W);
    if (w.head_b) f(p + "head.b" + s, *w.head_b);
  }

  template <class U>
  ModelWeights<U> skeleton() const {
    ModelWeights<U> out;
    if (embed_W) out.embed_W.emplace();
    if (embed_b) out.embed_b.emplace();
    for (const auto& layer : layers) out.layers.push_back(layer.template skeleton<U>());
    if (head_W) out.head_W.emplace();
    if (head_b) out.head_b.emplace();
    return out;
  }
};

using ModelParams = ModelWeights<Tensor>;

ModelParams init_model(const ModelSpec& spec, std::uint64_t seed);
ad::Var model_forward(const ad::Var& X, const ModelWeights<ad::Var>& w, const ModelSpec& spec,
                      const ForwardOptions& opts = {});
Tensor model_forward(const Tensor& X, const ModelParams& p, const ModelSpec& spec);
std::size_t model_param_count(const ModelSpec& spec);

}  // namespace bimamba
