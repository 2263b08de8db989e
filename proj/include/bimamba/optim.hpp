// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bimamba/tensor.hpp"

namespace bimamba {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  // Each gradient element is clamped to [clip_lo, clip_hi] before the moment update.
  double clip_lo = -1.0;
  double clip_hi = 1.0;
  // Decoupled weight decay; 0 disables it.
  double weight_decay = 0.0;
};

struct OptimState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
  AdamOptions options;

  static OptimState for_params(std::span<const Tensor> params, AdamOptions options = {});
};

// One bias-corrected Adam update of params in place.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimState& state, double lr);

// d_model^-0.5 * min(n_step^-0.5, n_step * w_steps^-1.5).
double warmup_lr(std::int64_t n_step, std::int64_t d_model, std::int64_t w_steps);

double global_grad_norm(std::span<const Tensor> grads);

}  // namespace bimamba
