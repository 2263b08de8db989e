// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "bimamba/error.hpp"

namespace bimamba::ad {

Tape& Var::tape() const {
  if (!tape_) throw StructuralError("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(id_); }

Tape::Tape(GradMode mode) : mode_(mode) {}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, recording(), "parameter"});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, false, "constant"});
  return Var(this, nodes_.size() - 1);
}

const Tape::Node& Tape::node(const Var& v) const {
  if (&v.tape() != this) throw StructuralError("Var belongs to a different tape");
  if (v.id() >= nodes_.size()) throw StructuralError("Var refers to a missing node");
  return nodes_[v.id()];
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward, const char* op) {
  bool wants_grad = false;
  for (const Var& in : inputs) wants_grad = node(in).requires_grad || wants_grad;
  wants_grad = wants_grad && recording();
  nodes_.push_back(Node{std::move(value), std::nullopt, wants_grad ? std::move(backward) : nullptr, wants_grad, op});
  return Var(this, nodes_.size() - 1);
}

bool Tape::needs_grad(const Var& v) const { return node(v).requires_grad; }

void Tape::accumulate(const Var& v, const Tensor& g) {
  const Node& n = node(v);
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    throw StructuralError(std::string("gradient shape ") + shape_string(g.shape()) + " does not match value " +
                          shape_string(n.value.shape()) + " at op " + n.op);
  }
  Node& m = nodes_[v.id()];
  if (!m.grad) {
    m.grad = g;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) (*m.grad)[i] += g[i];
  }
}

void Tape::backward(const Var& loss) {
  if (node(loss).value.size() != 1) {
    throw StructuralError("backward(loss) needs a scalar loss, got " + shape_string(node(loss).value.shape()));
  }
  backward(loss, Tensor(node(loss).value.shape(), 1.0));
}

void Tape::backward(const Var& output, const Tensor& seed) {
  if (!recording()) throw StructuralError("backward on an inference-mode tape");
  if (backward_done_) throw StructuralError("backward already ran on this tape");
  const Node& out = node(output);
  if (!out.requires_grad) throw StructuralError("output does not depend on any parameter");
  backward_done_ = true;
  accumulate(output, seed);
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.grad || !n.backward) continue;
    n.backward(*n.grad);
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = node(v);
  return n.grad ? *n.grad : Tensor(n.value.shape());
}

const Tensor& Tape::value(std::size_t id) const {
  if (id >= nodes_.size()) throw StructuralError("Var refers to a missing node");
  return nodes_[id].value;
}

const char* Tape::op_name(const Var& v) const { return node(v).op; }

// ---- primitives ------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Tape& t = a.tape();
  return t.record(bimamba::matmul(a.value(), b.value()), {a, b},
                  [&t, a, b](const Tensor& g) {
                    if (t.needs_grad(a)) t.accumulate(a, matmul_nt(g, b.value()));
                    if (t.needs_grad(b)) t.accumulate(b, matmul_tn_reduce(a.value(), g));
                  },
                  "matmul");
}

Var add(const Var& a, const Var& b) {
  Tape& t = a.tape();
  return t.record(bimamba::add(a.value(), b.value()), {a, b},
                  [&t, a, b](const Tensor& g) {
                    t.accumulate(a, g);
                    t.accumulate(b, g);
                  },
                  "add");
}

Var sub(const Var& a, const Var& b) {
  Tape& t = a.tape();
  return t.record(bimamba::sub(a.value(), b.value()), {a, b},
                  [&t, a, b](const Tensor& g) {
                    t.accumulate(a, g);
                    if (t.needs_grad(b)) t.accumulate(b, bimamba::scale(g, -1.0));
                  },
                  "sub");
}

Var mul(const Var& a, const Var& b) {
  Tape& t = a.tape();
  return t.record(bimamba::mul(a.value(), b.value()), {a, b},
                  [&t, a, b](const Tensor& g) {
                    if (t.needs_grad(a)) t.accumulate(a, bimamba::mul(g, b.value()));
                    if (t.needs_grad(b)) t.accumulate(b, bimamba::mul(g, a.value()));
                  },
                  "mul");
}

Var scale(const Var& a, double s) {
  Tape& t = a.tape();
  return t.record(bimamba::scale(a.value(), s), {a}, [&t, a, s](const Tensor& g) {
    t.accumulate(a, bimamba::scale(g, s));
  }, "scale");
}

Var add_lastdim(const Var& x, const Var& v) {
  Tape& t = x.tape();
  return t.record(bimamba::add_lastdim(x.value(), v.value()), {x, v},
                  [&t, x, v](const Tensor& g) {
                    t.accumulate(x, g);
                    if (t.needs_grad(v)) t.accumulate(v, reduce_to_lastdim(g));
                  },
                  "add_lastdim");
}

Var mul_lastdim(const Var& x, const Var& v) {
  Tape& t = x.tape();
  return t.record(bimamba::mul_lastdim(x.value(), v.value()), {x, v},
                  [&t, x, v](const Tensor& g) {
                    if (t.needs_grad(x)) t.accumulate(x, bimamba::mul_lastdim(g, v.value()));
                    if (t.needs_grad(v)) t.accumulate(v, reduce_to_lastdim(bimamba::mul(g, x.value())));
                  },
                  "mul_lastdim");
}

Var activation(const Var& x, Activation kind) {
  Tape& t = x.tape();
  return t.record(bimamba::activation(x.value(), kind), {x},
                  [&t, x, kind](const Tensor& g) {
                    const Tensor& xv = x.value();
                    Tensor dx(xv.shape());
                    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * activate_grad(xv[i], kind);
                    t.accumulate(x, dx);
                  },
                  "activation");
}

Var exp(const Var& x) {
  Tape& t = x.tape();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.value()[i]);
  return t.record(std::move(out), {x},
                  [&t, x, id = t.size()](const Tensor& g) { t.accumulate(x, bimamba::mul(g, t.value(id))); },
                  "exp");
}

Var neg(const Var& x) { return scale(x, -1.0); }

Var depthwise_conv1d(const Var& x, const Var& w, const Var& bias, bool causal) {
  Tape& t = x.tape();
  return t.record(bimamba::depthwise_conv1d(x.value(), w.value(), bias.value(), causal), {x, w, bias},
                  [&t, x, w, bias, causal](const Tensor& g) {
                    Conv1dGrads cg = depthwise_conv1d_backward(x.value(), w.value(), g, causal);
                    t.accumulate(x, cg.dx);
                    t.accumulate(w, cg.dw);
                    t.accumulate(bias, cg.dbias);
                  },
                  "depthwise_conv1d");
}

Var normalize(const Var& x, NormKind kind, const Var& gain, const std::optional<Var>& bias, double eps) {
  Tape& t = x.tape();
  std::optional<Tensor> bias_value;
  if (bias) bias_value = bias->value();
  Tensor out = bimamba::normalize(x.value(), kind, gain.value(), bias_value, eps);
  auto fn = [&t, x, kind, gain, bias, eps](const Tensor& g) {
    NormGrads ng = normalize_backward(x.value(), kind, gain.value(), eps, g);
    t.accumulate(x, ng.dx);
    t.accumulate(gain, ng.dgain);
    if (bias) t.accumulate(*bias, ng.dbias);
  };
  if (bias) return t.record(std::move(out), {x, gain, *bias}, fn, "normalize");
  return t.record(std::move(out), {x, gain}, fn, "normalize");
}

Var reverse_time(const Var& x) {
  Tape& t = x.tape();
  return t.record(bimamba::reverse_time(x.value()), {x},
                  [&t, x](const Tensor& g) { t.accumulate(x, bimamba::reverse_time(g)); }, "reverse_time");
}

Var selective_scan(const Var& u, const Var& delta, const Var& A, const Var& B, const Var& C, const Var& D,
                   ssm::ScanSchedule schedule) {
  Tape& t = u.tape();
  auto inputs = std::make_shared<ssm::SsmInputs>(
      ssm::SsmInputs{u.value(), delta.value(), A.value(), B.value(), C.value(), D.value()});
  const bool needs = t.recording() && (t.needs_grad(u) || t.needs_grad(delta) || t.needs_grad(A) ||
                                       t.needs_grad(B) || t.needs_grad(C) || t.needs_grad(D));
  if (!needs) {
    Tensor y = schedule.chunk == 0 ? ssm::selective_scan_sequential(*inputs)
                                   : ssm::selective_scan_parallel(*inputs, schedule.chunk);
    return t.record(std::move(y), {u, delta, A, B, C, D}, nullptr, "selective_scan");
  }
  auto trace = std::make_shared<ssm::ScanTrace>(ssm::selective_scan_traced(*inputs, schedule));
  Tensor y = trace->y;
  return t.record(std::move(y), {u, delta, A, B, C, D},
                  [&t, u, delta, A, B, C, D, inputs, trace, schedule](const Tensor& g) {
                    ssm::ScanGrads sg = ssm::selective_scan_backward(*inputs, *trace, g, schedule);
                    t.accumulate(u, sg.du);
                    t.accumulate(delta, sg.ddelta);
                    t.accumulate(A, sg.dA);
                    t.accumulate(B, sg.dB);
                    t.accumulate(C, sg.dC);
                    t.accumulate(D, sg.dD);
                  },
                  "selective_scan");
}

namespace {

struct AttentionGeometry {
  std::size_t batch, steps, width, heads, head_dim;
};

AttentionGeometry attention_geometry(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads) {
  if (q.rank() != 3 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("attention: q, k, v must share shape [B,L,D]");
  }
  if (n_heads == 0 || q.dim(2) % n_heads != 0) {
    throw ConfigError("attention: model width " + std::to_string(q.dim(2)) + " not divisible by " +
                      std::to_string(n_heads) + " heads");
  }
  return {q.dim(0), q.dim(1), q.dim(2), n_heads, q.dim(2) / n_heads};
}

// Computes attention output; when probs is non-null stores P[B,H,L,L].
Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionGeometry& g,
                         bool causal, Tensor* probs) {
  Tensor out(q.shape());
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(g.head_dim));
  std::vector<double> row(g.steps);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t h = 0; h < g.heads; ++h) {
      const std::size_t off = h * g.head_dim;
      for (std::size_t i = 0; i < g.steps; ++i) {
        const double* qi = q.data().data() + (b * g.steps + i) * g.width + off;
        const std::size_t limit = causal ? i + 1 : g.steps;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < limit; ++j) {
          const double* kj = k.data().data() + (b * g.steps + j) * g.width + off;
          double s = 0.0;
          for (std::size_t d = 0; d < g.head_dim; ++d) s += qi[d] * kj[d];
          row[j] = s * inv_sqrt;
          mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < limit; ++j) {
          row[j] = std::exp(row[j] - mx);
          z += row[j];
        }
        double* oi = out.data().data() + (b * g.steps + i) * g.width + off;
        for (std::size_t j = 0; j < limit; ++j) {
          row[j] /= z;
          const double* vj = v.data().data() + (b * g.steps + j) * g.width + off;
          for (std::size_t d = 0; d < g.head_dim; ++d) oi[d] += row[j] * vj[d];
        }
        if (probs) {
          double* prow = probs->data().data() + ((b * g.heads + h) * g.steps + i) * g.steps;
          std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(limit), prow);
        }
      }
    }
  }
  return out;
}

}  // namespace

Var attention(const Var& q, const Var& k, const Var& v, std::size_t n_heads, bool causal) {
  Tape& t = q.tape();
  const AttentionGeometry g = attention_geometry(q.value(), k.value(), v.value(), n_heads);
  const bool needs = t.recording() && (t.needs_grad(q) || t.needs_grad(k) || t.needs_grad(v));
  if (!needs) {
    return t.record(attention_forward(q.value(), k.value(), v.value(), g, causal, nullptr), {q, k, v}, nullptr,
                    "attention");
  }
  auto probs = std::make_shared<Tensor>(Shape{g.batch, g.heads, g.steps, g.steps});
  Tensor out = attention_forward(q.value(), k.value(), v.value(), g, causal, probs.get());
  return t.record(std::move(out), {q, k, v},
                  [&t, q, k, v, g, probs](const Tensor& dout) {
                    const Tensor& qv = q.value();
                    const Tensor& kv = k.value();
                    const Tensor& vv = v.value();
                    Tensor dq(qv.shape());
                    Tensor dk(kv.shape());
                    Tensor dv(vv.shape());
                    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(g.head_dim));
                    std::vector<double> dp(g.steps);
                    for (std::size_t b = 0; b < g.batch; ++b) {
                      for (std::size_t h = 0; h < g.heads; ++h) {
                        const std::size_t off = h * g.head_dim;
                        for (std::size_t i = 0; i < g.steps; ++i) {
                          const double* prow = probs->data().data() + ((b * g.heads + h) * g.steps + i) * g.steps;
                          const double* doi = dout.data().data() + (b * g.steps + i) * g.width + off;
                          double dot = 0.0;
                          for (std::size_t j = 0; j < g.steps; ++j) {
                            const std::size_t rj = (b * g.steps + j) * g.width + off;
                            double s = 0.0;
                            for (std::size_t d = 0; d < g.head_dim; ++d) {
                              s += doi[d] * vv[rj + d];
                              dv[rj + d] += prow[j] * doi[d];
                            }
                            dp[j] = s;
                            dot += prow[j] * s;
                          }
                          const std::size_t ri = (b * g.steps + i) * g.width + off;
                          for (std::size_t j = 0; j < g.steps; ++j) {
                            const double ds = prow[j] * (dp[j] - dot) * inv_sqrt;
                            if (ds == 0.0) continue;
                            const std::size_t rj = (b * g.steps + j) * g.width + off;
                            for (std::size_t d = 0; d < g.head_dim; ++d) {
                              dq[ri + d] += ds * kv[rj + d];
                              dk[rj + d] += ds * qv[ri + d];
                            }
                          }
                        }
                      }
                    }
                    t.accumulate(q, dq);
                    t.accumulate(k, dk);
                    t.accumulate(v, dv);
                  },
                  "attention");
}

Var glu(const Var& x) {
  Tape& t = x.tape();
  const Tensor& xv = x.value();
  const std::size_t two_c = xv.dim(-1);
  if (two_c % 2 != 0) throw DimensionError("glu: last axis must be even, got " + shape_string(xv.shape()));
  const std::size_t c = two_c / 2;
  const std::size_t rows = xv.size() / two_c;
  Shape out_shape = xv.shape();
  out_shape.back() = c;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < c; ++i) out[r * c + i] = xv[r * two_c + i] * sigmoid(xv[r * two_c + c + i]);
  }
  return t.record(std::move(out), {x},
                  [&t, x, c, rows, two_c](const Tensor& g) {
                    const Tensor& v = x.value();
                    Tensor dx(v.shape());
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t i = 0; i < c; ++i) {
                        const double a = v[r * two_c + i];
                        const double s = sigmoid(v[r * two_c + c + i]);
                        const double gi = g[r * c + i];
                        dx[r * two_c + i] = gi * s;
                        dx[r * two_c + c + i] = gi * a * s * (1.0 - s);
                      }
                    }
                    t.accumulate(x, dx);
                  },
                  "glu");
}

Var mean_time(const Var& x) {
  Tape& t = x.tape();
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("mean_time: expected [B,L,C], got " + shape_string(xv.shape()));
  const std::size_t bsz = xv.dim(0);
  const std::size_t len = xv.dim(1);
  const std::size_t c = xv.dim(2);
  Tensor out({bsz, c});
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t i = 0; i < c; ++i) out[b * c + i] += xv[(b * len + l) * c + i];
    }
  }
  for (double& v : out.data()) v /= static_cast<double>(len);
  return t.record(std::move(out), {x},
                  [&t, x, bsz, len, c](const Tensor& g) {
                    Tensor dx(x.shape());
                    const double inv = 1.0 / static_cast<double>(len);
                    for (std::size_t b = 0; b < bsz; ++b) {
                      for (std::size_t l = 0; l < len; ++l) {
                        for (std::size_t i = 0; i < c; ++i) dx[(b * len + l) * c + i] = g[b * c + i] * inv;
                      }
                    }
                    t.accumulate(x, dx);
                  },
                  "mean_time");
}

Var reshape(const Var& x, Shape shape) {
  Tape& t = x.tape();
  Shape original = x.shape();
  return t.record(x.value().reshaped(std::move(shape)), {x},
                  [&t, x, original](const Tensor& g) { t.accumulate(x, g.reshaped(original)); }, "reshape");
}

Var power(const Var& x, double alpha, double floor) {
  Tape& t = x.tape();
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(std::max(xv[i], floor), alpha);
  return t.record(std::move(out), {x},
                  [&t, x, alpha, floor](const Tensor& g) {
                    const Tensor& v = x.value();
                    Tensor dx(v.shape());
                    for (std::size_t i = 0; i < dx.size(); ++i) {
                      dx[i] = v[i] > floor ? g[i] * alpha * std::pow(v[i], alpha - 1.0) : 0.0;
                    }
                    t.accumulate(x, dx);
                  },
                  "power");
}

Var dropout(const Var& x, double p, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must lie in [0, 1)");
  if (p == 0.0) return x;
  Tape& t = x.tape();
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  auto mask = std::make_shared<Tensor>(x.shape());
  for (double& m : mask->data()) m = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return t.record(bimamba::mul(x.value(), *mask), {x},
                  [&t, x, mask](const Tensor& g) { t.accumulate(x, bimamba::mul(g, *mask)); }, "dropout");
}

Var sum(const Var& x) {
  Tape& t = x.tape();
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return t.record(Tensor::scalar(s), {x},
                  [&t, x](const Tensor& g) { t.accumulate(x, Tensor(x.shape(), g.item())); }, "sum");
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var mse(const Var& a, const Var& b) {
  Tape& t = a.tape();
  const Tensor diff = bimamba::sub(a.value(), b.value());
  double s = 0.0;
  for (double v : diff.data()) s += v * v;
  const double n = static_cast<double>(diff.size());
  return t.record(Tensor::scalar(s / n), {a, b},
                  [&t, a, b, n](const Tensor& g) {
                    Tensor d = bimamba::sub(a.value(), b.value());
                    for (double& v : d.data()) v *= 2.0 * g.item() / n;
                    t.accumulate(a, d);
                    if (t.needs_grad(b)) t.accumulate(b, bimamba::scale(d, -1.0));
                  },
                  "mse");
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  Tape& t = logits.tape();
  const Tensor& z = logits.value();
  if (targets.shape() != z.shape()) throw DimensionError("bce_with_logits: targets shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += softplus(z[i]) - targets[i] * z[i];
  const double n = static_cast<double>(z.size());
  return t.record(Tensor::scalar(s / n), {logits},
                  [&t, logits, targets, n](const Tensor& g) {
                    const Tensor& zv = logits.value();
                    Tensor dz(zv.shape());
                    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = (sigmoid(zv[i]) - targets[i]) * g.item() / n;
                    t.accumulate(logits, dz);
                  },
                  "bce_with_logits");
}

}  // namespace bimamba::ad
