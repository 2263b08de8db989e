// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/blocks.hpp"

#include <cmath>

#include "bimamba/error.hpp"
#include "bimamba/seed.hpp"

namespace bimamba {
namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

NormWeights<Tensor> init_norm(std::size_t d) { return {Tensor({d}, 1.0), Tensor({d}, 0.0)}; }

FfnWeights<Tensor> init_ffn(std::size_t d, std::size_t d_ff, std::mt19937_64& rng) {
  FfnWeights<Tensor> w;
  w.norm = init_norm(d);
  w.W_1 = init_linear(d, d_ff, rng);
  w.b_1 = uniform({d_ff}, inv_sqrt(d), rng);
  w.W_2 = init_linear(d_ff, d, rng);
  w.b_2 = uniform({d}, inv_sqrt(d_ff), rng);
  return w;
}

ConvModuleWeights<Tensor> init_conv(std::size_t d, std::size_t k, std::mt19937_64& rng) {
  ConvModuleWeights<Tensor> w;
  w.norm = init_norm(d);
  w.pw1 = init_linear(d, 2 * d, rng);
  w.pw1_b = uniform({2 * d}, inv_sqrt(d), rng);
  w.dw_w = uniform({d, k}, inv_sqrt(k), rng);
  w.dw_b = uniform({d}, inv_sqrt(k), rng);
  w.dw_norm = init_norm(d);
  w.pw2 = init_linear(d, d, rng);
  w.pw2_b = uniform({d}, inv_sqrt(d), rng);
  return w;
}

ad::Var layer_norm(const ad::Var& x, const NormWeights<ad::Var>& w, double eps) {
  return ad::normalize(x, NormKind::layer, w.gain, w.bias, eps);
}

ad::Var linear(const ad::Var& x, const ad::Var& W, const ad::Var& b) { return ad::add_lastdim(ad::matmul(x, W), b); }

// Sequential sublayer counter for dropout seeds.
struct Residual {
  const BlockSpec& spec;
  const ForwardOptions& opts;
  std::uint64_t index = 0;

  bool active() const { return opts.training && spec.dropout_p > 0.0; }

  // H + weight * update, with dropout on the update.
  ad::Var add(const ad::Var& H, ad::Var update, double weight = 1.0) {
    const std::uint64_t salt = index++;
    if (weight != 1.0) update = ad::scale(update, weight);
    if (active()) update = ad::dropout(update, spec.dropout_p, mix_seed(opts.dropout_seed, salt));
    return ad::add(H, update);
  }

  // Mixers that return H + update themselves.
  ad::Var wrap(const ad::Var& H, const ad::Var& with_residual) {
    if (!active()) {
      ++index;
      return with_residual;
    }
    return add(H, ad::sub(with_residual, H));
  }
};

ad::Var apply_mixer(const ad::Var& H, const LayerWeights<ad::Var>& w, const BlockSpec& spec,
                    const MambaConfig& mamba, Residual& res) {
  switch (spec.mixer) {
    case MixerKind::mhsa:
      return res.add(H, mhsa_forward(layer_norm(H, *w.mixer_norm, spec.norm_eps), *w.mhsa, spec.n_heads, spec.causal));
    case MixerKind::mamba:
      return res.wrap(H, mamba_forward(H, *w.mamba, mamba));
    case MixerKind::inn_bimamba:
      return res.wrap(H, inn_bimamba_forward(H, *w.inn, mamba));
    case MixerKind::ext_bimamba:
      return res.wrap(H, ext_bimamba_forward(H, *w.ext, mamba));
  }
  throw ConfigError("unknown mixer");
}

void require_part(bool present, const char* part) {
  if (!present) throw StructuralError(std::string("layer weights missing '") + part + "'");
}

void check_structure(const LayerWeights<ad::Var>& w, const BlockSpec& spec) {
  switch (spec.mixer) {
    case MixerKind::mhsa:
      require_part(w.mhsa && w.mixer_norm, "mhsa");
      break;
    case MixerKind::mamba:
      require_part(w.mamba.has_value(), "mamba");
      break;
    case MixerKind::inn_bimamba:
      require_part(w.inn.has_value(), "inn_bimamba");
      break;
    case MixerKind::ext_bimamba:
      require_part(w.ext.has_value(), "ext_bimamba");
      break;
  }
  if (spec.kind == BlockKind::transformer) require_part(w.ffn2.has_value(), "ffn2");
  if (spec.kind == BlockKind::conformer) {
    require_part(w.conv && w.ffn2 && w.final_norm, "conformer parts");
    if (spec.use_macaron) require_part(w.ffn1.has_value(), "ffn1");
  }
}

}  // namespace

BlockKind parse_block_kind(std::string_view name) {
  if (name == "transformer") return BlockKind::transformer;
  if (name == "conformer") return BlockKind::conformer;
  if (name == "bare_mamba") return BlockKind::bare_mamba;
  throw ConfigError("unknown block kind '" + std::string(name) + "'");
}

std::string_view block_kind_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::transformer:
      return "transformer";
    case BlockKind::conformer:
      return "conformer";
    case BlockKind::bare_mamba:
      return "bare_mamba";
  }
  return "unknown";
}

MixerKind parse_mixer_kind(std::string_view name) {
  if (name == "mhsa") return MixerKind::mhsa;
  if (name == "mamba") return MixerKind::mamba;
  if (name == "inn_bimamba") return MixerKind::inn_bimamba;
  if (name == "ext_bimamba") return MixerKind::ext_bimamba;
  throw ConfigError("unknown mixer '" + std::string(name) + "'");
}

std::string_view mixer_kind_name(MixerKind kind) {
  switch (kind) {
    case MixerKind::mhsa:
      return "mhsa";
    case MixerKind::mamba:
      return "mamba";
    case MixerKind::inn_bimamba:
      return "inn_bimamba";
    case MixerKind::ext_bimamba:
      return "ext_bimamba";
  }
  return "unknown";
}

void BlockSpec::validate(const MambaConfig& mamba) const {
  if (d_model == 0) throw ConfigError("block: d_model must be >= 1");
  if (!(norm_eps > 0.0)) throw ConfigError("block: norm_eps must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("block: dropout_p must lie in [0, 1)");
  if (mixer == MixerKind::mhsa) {
    if (kind == BlockKind::bare_mamba) throw ConfigError("block: bare_mamba needs a Mamba-family mixer");
    if (n_heads == 0 || d_model % n_heads != 0) {
      throw ConfigError("block: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                        std::to_string(n_heads));
    }
  } else {
    mamba.validate();
    if (mamba.d_model != d_model) {
      throw ConfigError("block: mamba d_model " + std::to_string(mamba.d_model) + " differs from block d_model " +
                        std::to_string(d_model));
    }
    if (mixer == MixerKind::mamba && !causal) {
      throw ConfigError("block: unidirectional mamba mixer is causal; set causal=true");
    }
    if (mixer != MixerKind::mamba && causal) {
      throw ConfigError("block: bidirectional mixers are non-causal; set causal=false");
    }
  }
  if (kind != BlockKind::bare_mamba && d_ff == 0) throw ConfigError("block: d_ff must be >= 1");
  if (kind == BlockKind::conformer) {
    if (conv_kernel == 0) throw ConfigError("block: conv_kernel must be >= 1");
    if (!causal && conv_kernel % 2 == 0) throw ConfigError("block: non-causal conv_kernel must be odd");
  }
}

Activation BlockSpec::ffn_activation() const {
  if (kind == BlockKind::conformer && use_swish) return Activation::swish;
  return Activation::relu;
}

LayerParams init_layer(const BlockSpec& spec, const MambaConfig& mamba, std::mt19937_64& rng) {
  spec.validate(mamba);
  const std::size_t d = spec.d_model;
  LayerParams p;
  if (spec.kind == BlockKind::conformer && spec.use_macaron) p.ffn1 = init_ffn(d, spec.d_ff, rng);
  switch (spec.mixer) {
    case MixerKind::mhsa:
      p.mixer_norm = init_norm(d);
      p.mhsa = MhsaWeights<Tensor>{init_linear(d, d, rng), init_linear(d, d, rng), init_linear(d, d, rng),
                                   init_linear(d, d, rng)};
      break;
    case MixerKind::mamba:
      p.mamba = init_params(mamba, rng());
      break;
    case MixerKind::inn_bimamba:
      p.inn = init_inn_params(mamba, rng());
      break;
    case MixerKind::ext_bimamba:
      p.ext = init_ext_params(mamba, rng());
      break;
  }
  if (spec.kind == BlockKind::conformer) {
    p.conv = init_conv(d, spec.conv_kernel, rng);
    p.final_norm = init_norm(d);
  }
  if (spec.kind != BlockKind::bare_mamba) p.ffn2 = init_ffn(d, spec.d_ff, rng);
  return p;
}

ad::Var mhsa_forward(const ad::Var& H, const MhsaWeights<ad::Var>& w, std::size_t n_heads, bool causal) {
  const ad::Var q = ad::matmul(H, w.W_q);
  const ad::Var k = ad::matmul(H, w.W_k);
  const ad::Var v = ad::matmul(H, w.W_v);
  return ad::matmul(ad::attention(q, k, v, n_heads, causal), w.W_o);
}

Tensor mhsa_forward(const Tensor& H, const MhsaWeights<Tensor>& w, std::size_t n_heads, bool causal) {
  ad::Tape tape(ad::GradMode::inference);
  return mhsa_forward(tape.constant(H), bind(tape, w), n_heads, causal).value();
}

ad::Var ffn_forward(const ad::Var& H, const FfnWeights<ad::Var>& w, Activation act, double eps) {
  const ad::Var hidden = ad::activation(linear(layer_norm(H, w.norm, eps), w.W_1, w.b_1), act);
  return linear(hidden, w.W_2, w.b_2);
}

ad::Var conv_module_forward(const ad::Var& H, const ConvModuleWeights<ad::Var>& w, bool causal, Activation act,
                            double eps) {
  const ad::Var gated = ad::glu(linear(layer_norm(H, w.norm, eps), w.pw1, w.pw1_b));
  const ad::Var conv = ad::depthwise_conv1d(gated, w.dw_w, w.dw_b, causal);
  return linear(ad::activation(layer_norm(conv, w.dw_norm, eps), act), w.pw2, w.pw2_b);
}

ad::Var layer_forward(const ad::Var& H, const LayerWeights<ad::Var>& w, const BlockSpec& spec,
                      const MambaConfig& mamba, const ForwardOptions& opts) {
  spec.validate(mamba);
  check_structure(w, spec);
  if (H.value().rank() != 3 || H.value().dim(2) != spec.d_model) {
    throw DimensionError("layer_forward: expected H[B,L," + std::to_string(spec.d_model) + "], got " +
                         shape_string(H.shape()));
  }
  Residual res{spec, opts};
  const Activation act = spec.ffn_activation();
  switch (spec.kind) {
    case BlockKind::bare_mamba:
      return apply_mixer(H, w, spec, mamba, res);
    case BlockKind::transformer: {
      const ad::Var mixed = apply_mixer(H, w, spec, mamba, res);
      return res.add(mixed, ffn_forward(mixed, *w.ffn2, act, spec.norm_eps));
    }
    case BlockKind::conformer: {
      ad::Var x = H;
      if (spec.use_macaron) x = res.add(x, ffn_forward(x, *w.ffn1, act, spec.norm_eps), 0.5);
      x = apply_mixer(x, w, spec, mamba, res);
      x = res.add(x, conv_module_forward(x, *w.conv, spec.causal, act, spec.norm_eps));
      x = res.add(x, ffn_forward(x, *w.ffn2, act, spec.norm_eps), spec.use_macaron ? 0.5 : 1.0);
      return layer_norm(x, *w.final_norm, spec.norm_eps);
    }
  }
  throw ConfigError("unknown block kind");
}

namespace {

Tensor run_layer(const Tensor& H, const BlockSpec& spec, const MambaConfig& mamba, const LayerParams& p,
                 BlockKind expected) {
  if (spec.kind != expected) {
    throw ConfigError("layer forward: spec kind is " + std::string(block_kind_name(spec.kind)) + ", expected " +
                      std::string(block_kind_name(expected)));
  }
  ad::Tape tape(ad::GradMode::inference);
  return layer_forward(tape.constant(H), bind(tape, p), spec, mamba).value();
}

}  // namespace

Tensor transformer_layer_forward(const Tensor& H, const BlockSpec& spec, const MambaConfig& mamba,
                                 const LayerParams& p) {
  return run_layer(H, spec, mamba, p, BlockKind::transformer);
}

Tensor conformer_layer_forward(const Tensor& H, const BlockSpec& spec, const MambaConfig& mamba,
                               const LayerParams& p) {
  return run_layer(H, spec, mamba, p, BlockKind::conformer);
}

Tensor sinusoidal_pe(std::size_t steps, std::size_t width) {
  if (steps == 0 || width == 0) throw DimensionError("sinusoidal_pe: extents must be >= 1");
  if (width % 2 != 0) throw DomainError("sinusoidal_pe: width must be even, got " + std::to_string(width));
  Tensor pe({steps, width});
  for (std::size_t l = 0; l < steps; ++l) {
    for (std::size_t i = 0; i < width; i += 2) {
      const double angle = static_cast<double>(l) / std::pow(10000.0, static_cast<double>(i) / width);
      pe[l * width + i] = std::sin(angle);
      pe[l * width + i + 1] = std::cos(angle);
    }
  }
  return pe;
}

std::size_t ffn_param_count(std::size_t d, std::size_t d_ff) { return 2 * d + d * d_ff + d_ff + d_ff * d + d; }

std::size_t conv_module_param_count(std::size_t d, std::size_t k) {
  return 2 * d + (2 * d * d + 2 * d) + (d * k + d) + 2 * d + (d * d + d);
}

std::size_t mixer_param_count(const BlockSpec& spec, const MambaConfig& mamba) {
  switch (spec.mixer) {
    case MixerKind::mhsa:
      return 2 * spec.d_model + 4 * spec.d_model * spec.d_model;
    case MixerKind::mamba:
      return param_count(MambaVariant::mamba, mamba);
    case MixerKind::inn_bimamba:
      return param_count(MambaVariant::inn, mamba);
    case MixerKind::ext_bimamba:
      return param_count(MambaVariant::ext, mamba);
  }
  return 0;
}

std::size_t layer_param_count(const BlockSpec& spec, const MambaConfig& mamba) {
  spec.validate(mamba);
  const std::size_t d = spec.d_model;
  const std::size_t ffn = ffn_param_count(d, spec.d_ff);
  std::size_t n = mixer_param_count(spec, mamba);
  switch (spec.kind) {
    case BlockKind::bare_mamba:
      break;
    case BlockKind::transformer:
      n += ffn;
      break;
    case BlockKind::conformer:
      n += (spec.use_macaron ? 2 : 1) * ffn + conv_module_param_count(d, spec.conv_kernel) + 2 * d;
      break;
  }
  return n;
}

void ModelSpec::validate() const {
  block.validate(mamba);
  if (depth == 0) throw ConfigError("model: depth must be >= 1");
  if (pool_mean && d_out == 0) throw ConfigError("model: pool_mean requires an output head");
}

ModelParams init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = spec.block.d_model;
  ModelParams p;
  if (spec.d_in > 0) {
    p.embed_W = init_linear(spec.d_in, d, rng);
    p.embed_b = uniform({d}, inv_sqrt(spec.d_in), rng);
  }
  for (std::size_t i = 0; i < spec.depth; ++i) p.layers.push_back(init_layer(spec.block, spec.mamba, rng));
  if (spec.d_out > 0) {
    p.head_W = init_linear(d, spec.d_out, rng);
    p.head_b = uniform({spec.d_out}, inv_sqrt(d), rng);
  }
  return p;
}

ad::Var model_forward(const ad::Var& X, const ModelWeights<ad::Var>& w, const ModelSpec& spec,
                      const ForwardOptions& opts) {
  spec.validate();
  if (w.layers.size() != spec.depth) throw StructuralError("model: layer count differs from depth");
  if (X.value().rank() != 3) throw DimensionError("model_forward: expected X[B,L,F], got " + shape_string(X.shape()));
  ad::Var H = X;
  if (spec.d_in > 0) {
    require_part(w.embed_W && w.embed_b, "embed");
    H = linear(H, *w.embed_W, *w.embed_b);
  }
  if (spec.block.use_pe) {
    const Tensor pe = sinusoidal_pe(H.value().dim(1), spec.block.d_model);
    std::vector<double> tiled;
    tiled.reserve(H.value().size());
    for (std::size_t b = 0; b < H.value().dim(0); ++b) tiled.insert(tiled.end(), pe.data().begin(), pe.data().end());
    H = ad::add(H, H.tape().constant(Tensor(H.shape(), std::move(tiled))));
  }
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    ForwardOptions layer_opts = opts;
    layer_opts.dropout_seed = mix_seed(opts.dropout_seed, 1000 + i);
    H = layer_forward(H, w.layers[i], spec.block, spec.mamba, layer_opts);
  }
  if (spec.pool_mean) H = ad::mean_time(H);
  if (spec.d_out > 0) {
    require_part(w.head_W && w.head_b, "head");
    H = linear(H, *w.head_W, *w.head_b);
  }
  return H;
}

Tensor model_forward(const Tensor& X, const ModelParams& p, const ModelSpec& spec) {
  ad::Tape tape(ad::GradMode::inference);
  return model_forward(tape.constant(X), bind(tape, p), spec).value();
}

std::size_t model_param_count(const ModelSpec& spec) {
  spec.validate();
  const std::size_t d = spec.block.d_model;
  std::size_t n = spec.depth * layer_param_count(spec.block, spec.mamba);
  if (spec.d_in > 0) n += spec.d_in * d + d;
  if (spec.d_out > 0) n += d * spec.d_out + spec.d_out;
  return n;
}

}  // namespace bimamba
