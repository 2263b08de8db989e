// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/bimamba.hpp"

#include <random>
#include <utility>

#include "bimamba/error.hpp"

namespace bimamba {
namespace {

void check_input(const ad::Var& H, const MambaConfig& cfg, const char* op) {
  if (H.value().rank() != 3 || H.value().dim(2) != cfg.d_model) {
    throw DimensionError(std::string(op) + ": expected H[B,L," + std::to_string(cfg.d_model) + "], got " +
                         shape_string(H.shape()));
  }
}

}  // namespace

InnBiMambaParams init_inn_params(const MambaConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  InnBiMambaParams p;
  p.norm_gain = Tensor({cfg.d_model}, 1.0);
  p.W_x = init_linear(cfg.d_model, cfg.d_inner(), rng);
  p.W_z = init_linear(cfg.d_model, cfg.d_inner(), rng);
  p.fwd = init_ssm_branch(cfg, rng);
  p.bwd = init_ssm_branch(cfg, rng);
  p.W_out = init_linear(cfg.d_inner(), cfg.d_model, rng);
  return p;
}

ExtBiMambaParams init_ext_params(const MambaConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ExtBiMambaParams p;
  p.norm_gain = Tensor({cfg.d_model}, 1.0);
  p.fwd = init_mamba_path(cfg, rng);
  p.bwd = init_mamba_path(cfg, rng);
  return p;
}

ad::Var inn_bimamba_forward(const ad::Var& H, const InnBiMambaWeights<ad::Var>& w, const MambaConfig& cfg) {
  check_input(H, cfg, "inn_bimamba_forward");
  const ad::Var normed = layer::rms_norm(H, w.norm_gain, cfg);
  const ad::Var x = ad::matmul(normed, w.W_x);
  const ad::Var z = ad::matmul(normed, w.W_z);
  const ad::Var y_fwd = layer::ssm_branch(x, w.fwd, cfg);
  const ad::Var y_bwd = ad::reverse_time(layer::ssm_branch(ad::reverse_time(x), w.bwd, cfg));
  const ad::Var gate = ad::activation(z, Activation::silu);
  const ad::Var merged = ad::add(ad::mul(y_fwd, gate), ad::mul(y_bwd, gate));
  return ad::add(ad::matmul(merged, w.W_out), H);
}

ad::Var ext_bimamba_forward(const ad::Var& H, const ExtBiMambaWeights<ad::Var>& w, const MambaConfig& cfg) {
  check_input(H, cfg, "ext_bimamba_forward");
  const ad::Var normed = layer::rms_norm(H, w.norm_gain, cfg);
  const ad::Var out_fwd = layer::mamba_path(normed, w.fwd, cfg);
  const ad::Var out_bwd = ad::reverse_time(layer::mamba_path(ad::reverse_time(normed), w.bwd, cfg));
  return ad::add(ad::add(out_fwd, out_bwd), H);
}

Tensor inn_bimamba_forward(const Tensor& H, const InnBiMambaParams& p, const MambaConfig& cfg) {
  ad::Tape tape(ad::GradMode::inference);
  const auto w = bind(tape, p);
  return inn_bimamba_forward(tape.constant(H), w, cfg).value();
}

Tensor ext_bimamba_forward(const Tensor& H, const ExtBiMambaParams& p, const MambaConfig& cfg) {
  ad::Tape tape(ad::GradMode::inference);
  const auto w = bind(tape, p);
  return ext_bimamba_forward(tape.constant(H), w, cfg).value();
}

InnBiMambaParams swap_directions(const InnBiMambaParams& p) {
  InnBiMambaParams out = p;
  std::swap(out.fwd, out.bwd);
  return out;
}

ExtBiMambaParams swap_directions(const ExtBiMambaParams& p) {
  ExtBiMambaParams out = p;
  std::swap(out.fwd, out.bwd);
  return out;
}

MambaVariant parse_mamba_variant(std::string_view name) {
  if (name == "mamba") return MambaVariant::mamba;
  if (name == "inn" || name == "inn_bimamba") return MambaVariant::inn;
  if (name == "ext" || name == "ext_bimamba") return MambaVariant::ext;
  throw ConfigError("unknown mamba variant '" + std::string(name) + "'");
}

std::string_view mamba_variant_name(MambaVariant v) {
  switch (v) {
    case MambaVariant::mamba:
      return "mamba";
    case MambaVariant::inn:
      return "inn";
    case MambaVariant::ext:
      return "ext";
  }
  return "unknown";
}

std::size_t param_count(MambaVariant variant, const MambaConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  const std::size_t e = cfg.d_inner();
  const std::size_t projections = 2 * d * e + e * d;  // W_x, W_z, W_out
  const std::size_t branch = ssm_branch_param_count(cfg);
  switch (variant) {
    case MambaVariant::mamba:
      return d + projections + branch;
    case MambaVariant::inn:
      return d + projections + 2 * branch;
    case MambaVariant::ext:
      return d + 2 * (projections + branch);
  }
  return 0;
}

std::size_t enumerated_param_count(MambaVariant variant, const MambaConfig& cfg) {
  switch (variant) {
    case MambaVariant::mamba:
      return count_parameters(init_params(cfg, 0));
    case MambaVariant::inn:
      return count_parameters(init_inn_params(cfg, 0));
    case MambaVariant::ext:
      return count_parameters(init_ext_params(cfg, 0));
  }
  return 0;
}

}  // namespace bimamba
