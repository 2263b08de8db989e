// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bimamba/autodiff.hpp"
#include "bimamba/tensor.hpp"

namespace bimamba {

struct GradCheckOptions {
  double eps = 1e-4;
  std::size_t coordinates = 200;  // sampled without replacement; all when fewer exist
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Location of the worst coordinate.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
};

using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

// Compares analytic gradients against central differences
// (f(p + eps e_i) - f(p - eps e_i)) / 2eps at sampled coordinates. The error
// at each coordinate is |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
GradCheckResult finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params,
                                  const std::vector<Tensor>& analytic, const GradCheckOptions& options);

// Builds a scalar loss from parameter Vars on a fresh tape.
using LossBuilder = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

// Reverse-mode gradients of the loss with respect to every parameter.
std::vector<Tensor> tape_gradients(const LossBuilder& build, const std::vector<Tensor>& params);
double tape_loss(const LossBuilder& build, const std::vector<Tensor>& params);

// tape_gradients checked against finite differences of tape_loss.
GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Tensor>& params,
                                const GradCheckOptions& options);

}  // namespace bimamba
