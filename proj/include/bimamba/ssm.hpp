// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Selective state-space scan.
//
// For every batch b, channel e and state n the recurrence is
//
//   h[l] = exp(delta[l,e] * A[e,n]) * h[l-1] + delta[l,e] * B[l,n] * u[l,e]
//   y[l,e] = sum_n C[l,n] * h[l] + D[e] * u[l,e]
//
// with h[-1] = 0. The input-coupling term uses the first-order (Taylor) form
// delta * B rather than the exact zero-order-hold integral.

#pragma once

#include <cstddef>

#include "bimamba/tensor.hpp"

namespace bimamba::ssm {

struct SsmInputs {
  Tensor u;      // [B, L, E]
  Tensor delta;  // [B, L, E], strictly positive
  Tensor A;      // [E, N], strictly negative
  Tensor B;      // [B, L, N]
  Tensor C;      // [B, L, N]
  Tensor D;      // [E]

  std::size_t batch() const { return u.dim(0); }
  std::size_t steps() const { return u.dim(1); }
  std::size_t channels() const { return u.dim(2); }
  std::size_t state() const { return A.dim(1); }

  // Throws DimensionError on shape mismatch, DomainError when delta <= 0 or A >= 0.
  void validate() const;
};

struct Discretized {
  Tensor Abar;  // [B, L, E, N]
  Tensor Bbar;  // [B, L, E, N], delta * B
};

Discretized discretize(const Tensor& A, const Tensor& delta, const Tensor& B);

// Element of the associative scan over h[l] = a * h[l-1] + b.
struct ScanElement {
  Tensor a;
  Tensor b;

  static ScanElement identity(const Shape& shape);
};

// Applies x then y: (x.a * y.a, y.a * x.b + y.b).
ScanElement combine(const ScanElement& x, const ScanElement& y);

Tensor selective_scan_sequential(const SsmInputs& in);
Tensor selective_scan_parallel(const SsmInputs& in, std::size_t chunk);

// Scan schedule shared by the forward pass and its adjoint. chunk == 0 runs the
// plain left-to-right recurrence.
struct ScanSchedule {
  std::size_t chunk = 0;
};

struct ScanTrace {
  Tensor y;  // [B, L, E]
  Tensor h;  // [B, L, E, N]
};

ScanTrace selective_scan_traced(const SsmInputs& in, ScanSchedule schedule);

struct ScanGrads {
  Tensor du, ddelta, dA, dB, dC, dD;
};

// Reverse-mode gradients of the scan given dL/dy. The adjoint state obeys
// g[l] = Abar[l+1] * g[l+1] + C[l] * dy[l] and is evaluated with the same
// schedule as the forward pass.
ScanGrads selective_scan_backward(const SsmInputs& in, const ScanTrace& trace, const Tensor& dy,
                                  ScanSchedule schedule);

// Convolution kernel of a time-invariant SSM: K[e, j] = sum_n C[n] Abar[e,n]^j Bbar[e,n].
Tensor lti_kernel(const Tensor& Abar, const Tensor& Bbar, const Tensor& C, std::size_t length);

// Truncated causal convolution y[b,l,e] = sum_{j<=l} K[e,j] x[b,l-j,e].
Tensor lti_apply(const Tensor& x, const Tensor& K);

// Solves h[l] = a[l] * h[l-1] + b[l] (h[-1] = 0) for `steps` rows of `width`
// lanes. With reverse set the recurrence runs from the last row to the first.
// chunk == 0 is the sequential recurrence; otherwise rows are split into
// chunks of that size, scanned locally, and stitched with a Blelloch
// exclusive scan over the chunk aggregates.
void linear_recurrence(const double* a, const double* b, double* h, std::size_t steps, std::size_t width,
                       std::size_t chunk, bool reverse);

}  // namespace bimamba::ssm
