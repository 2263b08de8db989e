// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Reverse-mode automatic differentiation over Tensor primitives.
//
// A Tape records each primitive as a node holding its output value and a
// closure that pushes the output gradient to its inputs. Nodes are appended in
// execution order, so walking the tape backwards is a valid reverse
// topological order and visits every node once.
//
// In inference mode the tape keeps values only: no closures, no saved
// activations, and no gradients. Model forward passes are written once against
// Var and run in either mode.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bimamba/ops.hpp"
#include "bimamba/ssm.hpp"
#include "bimamba/tensor.hpp"

namespace bimamba::ad {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape& tape() const;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradMode { record, inference };

class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& out_grad)>;

  explicit Tape(GradMode mode = GradMode::record);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == GradMode::record; }

  // Leaf that receives gradients (when recording).
  Var parameter(Tensor value);
  // Leaf that never receives gradients.
  Var constant(Tensor value);

  // Appends an op node. `backward` is dropped unless some input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward, const char* op);

  // True if gradients flow into v.
  bool needs_grad(const Var& v) const;
  // Adds g into the gradient buffer of v; no-op when v needs no gradient.
  void accumulate(const Var& v, const Tensor& g);

  // Seeds d(loss)/d(loss) = 1 and propagates. The loss must be a single scalar.
  void backward(const Var& loss);
  // Propagates an arbitrary seed gradient from `output`.
  void backward(const Var& output, const Tensor& seed);

  // Gradient of a node after backward(); zeros if none reached it.
  Tensor grad(const Var& v) const;

  const Tensor& value(std::size_t id) const;
  std::size_t size() const { return nodes_.size(); }
  const char* op_name(const Var& v) const;

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    BackwardFn backward;
    bool requires_grad = false;
    const char* op = "";
  };

  const Node& node(const Var& v) const;

  GradMode mode_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- primitives ------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_lastdim(const Var& x, const Var& v);
Var mul_lastdim(const Var& x, const Var& v);
Var activation(const Var& x, Activation kind);
Var exp(const Var& x);
Var neg(const Var& x);
Var depthwise_conv1d(const Var& x, const Var& w, const Var& bias, bool causal);
Var normalize(const Var& x, NormKind kind, const Var& gain, const std::optional<Var>& bias, double eps);
Var reverse_time(const Var& x);

// Selective scan over SsmInputs fields given as Vars; see ssm.hpp.
Var selective_scan(const Var& u, const Var& delta, const Var& A, const Var& B, const Var& C, const Var& D,
                   ssm::ScanSchedule schedule = {});

// Multi-head scaled dot-product attention on projected q, k, v [B, L, D].
// Returns concatenated heads [B, L, D]. Inference mode streams one query row
// at a time and never materializes the L x L score matrix.
Var attention(const Var& q, const Var& k, const Var& v, std::size_t n_heads, bool causal);

// Gated linear unit over the last axis: x[..., 2C] -> a * sigmoid(b), a and b the two halves.
Var glu(const Var& x);
// Mean over axis 1 of x[B, L, C] -> [B, C].
Var mean_time(const Var& x);
// Same data, new shape.
Var reshape(const Var& x, Shape shape);
// Elementwise max(x, floor)^alpha.
Var power(const Var& x, double alpha, double floor);
// Inverted dropout with a fixed Bernoulli mask drawn from seed.
Var dropout(const Var& x, double p, std::uint64_t seed);

Var sum(const Var& x);
Var mean(const Var& x);
// mean((a - b)^2)
Var mse(const Var& a, const Var& b);
// Mean binary cross-entropy of logits against {0,1} targets (same shape).
Var bce_with_logits(const Var& logits, const Tensor& targets);

}  // namespace bimamba::ad
