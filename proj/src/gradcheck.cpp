// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bimamba/error.hpp"

namespace bimamba {

GradCheckResult finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params,
                                  const std::vector<Tensor>& analytic, const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw DomainError("finite_diff_check: eps must be positive");
  if (analytic.size() != params.size()) throw DimensionError("finite_diff_check: gradient count mismatch");
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (analytic[p].shape() != params[p].shape()) throw DimensionError("finite_diff_check: gradient shape mismatch");
    for (std::size_t i = 0; i < params[p].size(); ++i) coords.emplace_back(p, i);
  }
  std::mt19937_64 rng(options.seed);
  if (coords.size() > options.coordinates) {
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.coordinates);
    std::sort(coords.begin(), coords.end());
  }

  auto eval = [&](const std::vector<Tensor>& p) {
    const double v = f(p);
    if (!std::isfinite(v)) throw EvaluationError("finite_diff_check: non-finite function value");
    return v;
  };

  GradCheckResult result;
  result.coordinates = coords.size();
  std::vector<Tensor> work = params;
  for (const auto& [p, i] : coords) {
    const double orig = work[p][i];
    work[p][i] = orig + options.eps;
    const double up = eval(work);
    work[p][i] = orig - options.eps;
    const double down = eval(work);
    work[p][i] = orig;
    const double fd = (up - down) / (2.0 * options.eps);
    const double ad = analytic[p][i];
    const double err = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_param = p;
      result.worst_index = i;
    }
  }
  return result;
}

std::vector<Tensor> tape_gradients(const LossBuilder& build, const std::vector<Tensor>& params) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.parameter(p));
  ad::Var loss = build(tape, vars);
  tape.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (const ad::Var& v : vars) grads.push_back(tape.grad(v));
  return grads;
}

double tape_loss(const LossBuilder& build, const std::vector<Tensor>& params) {
  ad::Tape tape(ad::GradMode::inference);
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.parameter(p));
  return build(tape, vars).value().item();
}

GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Tensor>& params,
                                const GradCheckOptions& options) {
  const std::vector<Tensor> grads = tape_gradients(build, params);
  return finite_diff_check([&](const std::vector<Tensor>& p) { return tape_loss(build, p); }, params, grads,
                           options);
}

}  // namespace bimamba
