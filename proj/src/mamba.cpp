// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/mamba.hpp"

#include <algorithm>
#include <cmath>

#include "bimamba/error.hpp"
#include "bimamba/ops.hpp"

namespace bimamba {
namespace {

constexpr double kDtMin = 1e-3;
constexpr double kDtMax = 1e-1;
// Lower bound on the multiplicative perturbation so A stays negative.
constexpr double kMinPerturbation = 1e-3;

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

AInit parse_a_init(std::string_view name) {
  if (name == "real_diagonal") return AInit::real_diagonal;
  if (name == "random") return AInit::random;
  if (name == "gaussian_perturbed") return AInit::gaussian_perturbed;
  throw ConfigError("unknown a_init '" + std::string(name) + "'");
}

std::string_view a_init_name(AInit mode) {
  switch (mode) {
    case AInit::real_diagonal:
      return "real_diagonal";
    case AInit::random:
      return "random";
    case AInit::gaussian_perturbed:
      return "gaussian_perturbed";
  }
  return "unknown";
}

void MambaConfig::validate() const {
  if (d_model == 0 || expand == 0 || d_state == 0 || d_conv == 0 || dt_ratio == 0) {
    throw ConfigError("mamba config: all extents must be >= 1");
  }
  if (a_noise_sigma < 0.0) throw ConfigError("mamba config: a_noise_sigma must be >= 0");
  if (!(norm_eps > 0.0)) throw ConfigError("mamba config: norm_eps must be positive");
}

Tensor init_linear(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return uniform({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

SsmBranchWeights<Tensor> init_ssm_branch(const MambaConfig& cfg, std::mt19937_64& rng) {
  const std::size_t e = cfg.d_inner();
  const std::size_t n = cfg.d_state;
  const std::size_t r = cfg.dt_rank();
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_conv));
  SsmBranchWeights<Tensor> w;
  w.conv_w = uniform({e, cfg.d_conv}, conv_bound, rng);
  w.conv_b = uniform({e}, conv_bound, rng);
  w.W_B = init_linear(e, n, rng);
  w.W_C = init_linear(e, n, rng);
  w.W_1 = init_linear(e, r, rng);
  w.W_2 = init_linear(r, e, rng);

  // softplus(delta_bias) log-uniform in [kDtMin, kDtMax].
  w.delta_bias = Tensor({e});
  std::uniform_real_distribution<double> log_dt(std::log(kDtMin), std::log(kDtMax));
  for (double& v : w.delta_bias.data()) {
    const double dt = std::exp(log_dt(rng));
    v = std::log(std::expm1(dt));
  }

  w.A_log = Tensor({e, n});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < e; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double base = static_cast<double>(j + 1);
      double a_log = 0.0;
      switch (cfg.a_init) {
        case AInit::real_diagonal:
          a_log = std::log(base);
          break;
        case AInit::random:
          a_log = gauss(rng);
          break;
        case AInit::gaussian_perturbed: {
          const double gamma = cfg.a_noise_sigma * gauss(rng);
          a_log = std::log(base * std::max(1.0 + gamma, kMinPerturbation));
          break;
        }
      }
      w.A_log[i * n + j] = a_log;
    }
  }
  w.D_skip = Tensor({e}, 1.0);
  return w;
}

MambaPathWeights<Tensor> init_mamba_path(const MambaConfig& cfg, std::mt19937_64& rng) {
  MambaPathWeights<Tensor> w;
  w.W_x = init_linear(cfg.d_model, cfg.d_inner(), rng);
  w.W_z = init_linear(cfg.d_model, cfg.d_inner(), rng);
  w.ssm = init_ssm_branch(cfg, rng);
  w.W_out = init_linear(cfg.d_inner(), cfg.d_model, rng);
  return w;
}

MambaParams init_params(const MambaConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  MambaParams p;
  p.norm_gain = Tensor({cfg.d_model}, 1.0);
  p.path = init_mamba_path(cfg, rng);
  return p;
}

SelectiveParams generate_ssm_params(const Tensor& xp, const MambaParams& p) {
  SelectiveParams out;
  out.B = matmul(xp, p.path.ssm.W_B);
  out.C = matmul(xp, p.path.ssm.W_C);
  out.delta = activation(add_lastdim(matmul(matmul(xp, p.path.ssm.W_1), p.path.ssm.W_2), p.path.ssm.delta_bias),
                         Activation::softplus);
  return out;
}

namespace layer {

SelectiveVars generate_ssm_params(const ad::Var& xp, const SsmBranchWeights<ad::Var>& w) {
  SelectiveVars out;
  out.B = ad::matmul(xp, w.W_B);
  out.C = ad::matmul(xp, w.W_C);
  out.delta =
      ad::activation(ad::add_lastdim(ad::matmul(ad::matmul(xp, w.W_1), w.W_2), w.delta_bias), Activation::softplus);
  return out;
}

ad::Var ssm_branch(const ad::Var& x, const SsmBranchWeights<ad::Var>& w, const MambaConfig& cfg) {
  const ad::Var xp = ad::activation(ad::depthwise_conv1d(x, w.conv_w, w.conv_b, /*causal=*/true), Activation::silu);
  const SelectiveVars sel = generate_ssm_params(xp, w);
  const ad::Var A = ad::neg(ad::exp(w.A_log));
  return ad::selective_scan(xp, sel.delta, A, sel.B, sel.C, w.D_skip, ssm::ScanSchedule{cfg.scan_chunk});
}

ad::Var mamba_path(const ad::Var& normed, const MambaPathWeights<ad::Var>& w, const MambaConfig& cfg) {
  const ad::Var x = ad::matmul(normed, w.W_x);
  const ad::Var z = ad::matmul(normed, w.W_z);
  const ad::Var y = ssm_branch(x, w.ssm, cfg);
  return ad::matmul(ad::mul(y, ad::activation(z, Activation::silu)), w.W_out);
}

ad::Var rms_norm(const ad::Var& H, const ad::Var& gain, const MambaConfig& cfg) {
  return ad::normalize(H, NormKind::rms, gain, std::nullopt, cfg.norm_eps);
}

}  // namespace layer

ad::Var mamba_forward(const ad::Var& H, const MambaWeights<ad::Var>& w, const MambaConfig& cfg) {
  if (H.value().rank() != 3 || H.value().dim(2) != cfg.d_model) {
    throw DimensionError("mamba_forward: expected H[B,L," + std::to_string(cfg.d_model) + "], got " +
                         shape_string(H.shape()));
  }
  const ad::Var normed = layer::rms_norm(H, w.norm_gain, cfg);
  return ad::add(layer::mamba_path(normed, w.path, cfg), H);
}

Tensor mamba_forward(const Tensor& H, const MambaParams& p, const MambaConfig& cfg) {
  ad::Tape tape(ad::GradMode::inference);
  const auto w = bind(tape, p);
  return mamba_forward(tape.constant(H), w, cfg).value();
}

std::size_t ssm_branch_param_count(const MambaConfig& cfg) {
  const std::size_t e = cfg.d_inner();
  const std::size_t n = cfg.d_state;
  // conv_w + conv_b + W_B + W_C + W_1 + W_2 + delta_bias + A_log + D_skip
  return e * cfg.d_conv + e + 2 * e * n + 2 * e * cfg.dt_rank() + e + e * n + e;
}

std::size_t mamba_param_count(const MambaConfig& cfg) {
  const std::size_t d = cfg.d_model;
  const std::size_t e = cfg.d_inner();
  return 2 * d * e + ssm_branch_param_count(cfg) + e * d + d;
}

}  // namespace bimamba
