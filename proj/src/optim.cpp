// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/optim.hpp"

#include <algorithm>
#include <cmath>

#include "bimamba/error.hpp"

namespace bimamba {

OptimState OptimState::for_params(std::span<const Tensor> params, AdamOptions options) {
  OptimState s;
  s.options = options;
  for (const Tensor& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  const AdamOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = params[p];
    const Tensor& g = grads[p];
    if (g.shape() != w.shape() || state.m[p].shape() != w.shape()) {
      throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(p));
    }
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = std::clamp(g[i], o.clip_lo, o.clip_hi);
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      if (o.weight_decay > 0.0) w[i] -= lr * o.weight_decay * w[i];
      w[i] -= lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

double warmup_lr(std::int64_t n_step, std::int64_t d_model, std::int64_t w_steps) {
  if (n_step < 1 || d_model < 1 || w_steps < 1) throw DomainError("warmup_lr: arguments must be positive");
  const double n = static_cast<double>(n_step);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(n, -0.5), n * std::pow(static_cast<double>(w_steps), -1.5));
}

double global_grad_norm(std::span<const Tensor> grads) {
  double s = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) s += v * v;
  }
  return std::sqrt(s);
}

}  // namespace bimamba
