// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Dense numerical primitives. All functions are pure: inputs are never
// modified and reduction order is fixed (sequential over the contracted axis),
// so results are bit-stable across runs.

#pragma once

#include <optional>
#include <string_view>

#include "bimamba/tensor.hpp"

namespace bimamba {

enum class Activation { silu, swish, sigmoid, softplus, relu };
enum class NormKind { layer, rms };

Activation parse_activation(std::string_view name);
NormKind parse_norm_kind(std::string_view name);

// a[..., M, K] x b[K, P] -> [..., M, P].
Tensor matmul(const Tensor& a, const Tensor& b);
// a[..., M, P] x b[K, P]^T -> [..., M, K].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// Sum over leading dims of a[..., M, K]^T x g[..., M, P] -> [K, P].
Tensor matmul_tn_reduce(const Tensor& a, const Tensor& g);

double sigmoid(double x);
double softplus(double x);
double activate(double x, Activation kind);
// d activate / dx evaluated at x.
double activate_grad(double x, Activation kind);
Tensor activation(const Tensor& x, Activation kind);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// x[..., C] + v[C] and x[..., C] * v[C].
Tensor add_lastdim(const Tensor& x, const Tensor& v);
Tensor mul_lastdim(const Tensor& x, const Tensor& v);
// Sum of x[..., C] over all leading dims -> [C].
Tensor reduce_to_lastdim(const Tensor& x);

// Per-channel convolution over time. x[B, L, E], w[E, K], bias[E].
// Causal mode left-pads K-1 zeros; otherwise K must be odd and (K-1)/2 zeros
// pad each side.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, bool causal);

struct Conv1dGrads {
  Tensor dx;
  Tensor dw;
  Tensor dbias;
};
Conv1dGrads depthwise_conv1d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, bool causal);

// Normalizes over the last axis of x[..., D].
Tensor normalize(const Tensor& x, NormKind kind, const Tensor& gain, const std::optional<Tensor>& bias,
                 double eps);

struct NormGrads {
  Tensor dx;
  Tensor dgain;
  Tensor dbias;  // zeros for rms
};
NormGrads normalize_backward(const Tensor& x, NormKind kind, const Tensor& gain, double eps, const Tensor& dy);

// Reverses axis 1 of x[B, L, ...].
Tensor reverse_time(const Tensor& x);

}  // namespace bimamba
