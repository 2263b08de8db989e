// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bimamba/error.hpp"

namespace bimamba {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_lastdim(const Tensor& x, const Tensor& v, const char* op) {
  if (x.rank() < 1 || v.rank() != 1 || v.dim(0) != x.dim(-1)) {
    throw DimensionError(std::string(op) + ": vector " + shape_string(v.shape()) + " does not match last axis of " +
                         shape_string(x.shape()));
  }
}

struct ConvGeometry {
  std::size_t batch, steps, channels, taps, pad;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, bool causal) {
  if (x.rank() != 3 || w.rank() != 2 || w.dim(0) != x.dim(2)) {
    throw DimensionError("depthwise_conv1d: expected x[B,L,E] and w[E,K], got " + shape_string(x.shape()) + " and " +
                         shape_string(w.shape()));
  }
  const std::size_t k = w.dim(1);
  if (!causal && k % 2 == 0) throw ConfigError("depthwise_conv1d: non-causal mode needs an odd kernel width");
  return {x.dim(0), x.dim(1), x.dim(2), k, causal ? k - 1 : (k - 1) / 2};
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "silu") return Activation::silu;
  if (name == "swish") return Activation::swish;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "softplus") return Activation::softplus;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

NormKind parse_norm_kind(std::string_view name) {
  if (name == "layer") return NormKind::layer;
  if (name == "rms") return NormKind::rms;
  throw ConfigError("unknown norm kind '" + std::string(name) + "'");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.dim(-1) != b.dim(0)) {
    throw DimensionError("matmul: cannot contract " + shape_string(a.shape()) + " with " + shape_string(b.shape()));
  }
  const std::size_t k_dim = b.dim(0);
  const std::size_t p_dim = b.dim(1);
  const std::size_t rows = a.size() / k_dim;
  Shape out_shape = a.shape();
  out_shape.back() = p_dim;
  Tensor out(out_shape);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < rows; ++i) {
    double* orow = po + i * p_dim;
    const double* arow = pa + i * k_dim;
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double av = arow[k];
      const double* brow = pb + k * p_dim;
      for (std::size_t j = 0; j < p_dim; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.dim(-1) != b.dim(1)) {
    throw DimensionError("matmul_nt: cannot contract " + shape_string(a.shape()) + " with " +
                         shape_string(b.shape()) + "^T");
  }
  const std::size_t p_dim = b.dim(1);
  const std::size_t k_dim = b.dim(0);
  const std::size_t rows = a.size() / p_dim;
  Shape out_shape = a.shape();
  out_shape.back() = k_dim;
  Tensor out(out_shape);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* arow = pa + i * p_dim;
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double* brow = pb + k * p_dim;
      double acc = 0.0;
      for (std::size_t j = 0; j < p_dim; ++j) acc += arow[j] * brow[j];
      po[i * k_dim + k] = acc;
    }
  }
  return out;
}

Tensor matmul_tn_reduce(const Tensor& a, const Tensor& g) {
  if (a.rank() < 2 || g.rank() != a.rank() || a.size() / a.dim(-1) != g.size() / g.dim(-1)) {
    throw DimensionError("matmul_tn_reduce: incompatible " + shape_string(a.shape()) + " and " +
                         shape_string(g.shape()));
  }
  const std::size_t k_dim = a.dim(-1);
  const std::size_t p_dim = g.dim(-1);
  const std::size_t rows = a.size() / k_dim;
  Tensor out({k_dim, p_dim});
  const double* pa = a.data().data();
  const double* pg = g.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double av = pa[i * k_dim + k];
      if (av == 0.0) continue;
      double* orow = po + k * p_dim;
      const double* grow = pg + i * p_dim;
      for (std::size_t j = 0; j < p_dim; ++j) orow[j] += av * grow[j];
    }
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double activate(double x, Activation kind) {
  switch (kind) {
    case Activation::silu:
    case Activation::swish:
      return x * sigmoid(x);
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::softplus:
      return softplus(x);
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
  }
  return x;
}

double activate_grad(double x, Activation kind) {
  switch (kind) {
    case Activation::silu:
    case Activation::swish: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::softplus:
      return sigmoid(x);
    case Activation::relu:
      return x > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = activate(x[i], kind);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Tensor add_lastdim(const Tensor& x, const Tensor& v) {
  require_lastdim(x, v, "add_lastdim");
  Tensor out = x;
  const std::size_t c = v.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i % c];
  return out;
}

Tensor mul_lastdim(const Tensor& x, const Tensor& v) {
  require_lastdim(x, v, "mul_lastdim");
  Tensor out = x;
  const std::size_t c = v.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= v[i % c];
  return out;
}

Tensor reduce_to_lastdim(const Tensor& x) {
  const std::size_t c = x.dim(-1);
  Tensor out({c});
  for (std::size_t i = 0; i < x.size(); ++i) out[i % c] += x[i];
  return out;
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, bool causal) {
  const ConvGeometry g = conv_geometry(x, w, causal);
  if (bias.rank() != 1 || bias.dim(0) != g.channels) throw DimensionError("depthwise_conv1d: bias must be [E]");
  Tensor out(x.shape());
  const double* px = x.data().data();
  const double* pw = w.data().data();
  double* po = out.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t l = 0; l < g.steps; ++l) {
      double* orow = po + (b * g.steps + l) * g.channels;
      for (std::size_t e = 0; e < g.channels; ++e) orow[e] = bias[e];
      for (std::size_t k = 0; k < g.taps; ++k) {
        // source step l - pad + k
        if (l + k < g.pad || l + k - g.pad >= g.steps) continue;
        const double* xrow = px + (b * g.steps + l + k - g.pad) * g.channels;
        for (std::size_t e = 0; e < g.channels; ++e) orow[e] += pw[e * g.taps + k] * xrow[e];
      }
    }
  }
  return out;
}

Conv1dGrads depthwise_conv1d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, bool causal) {
  const ConvGeometry g = conv_geometry(x, w, causal);
  require_same_shape(x, dy, "depthwise_conv1d_backward");
  Conv1dGrads grads{Tensor(x.shape()), Tensor(w.shape()), Tensor({g.channels})};
  const double* px = x.data().data();
  const double* pw = w.data().data();
  const double* pdy = dy.data().data();
  double* pdx = grads.dx.data().data();
  double* pdw = grads.dw.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t l = 0; l < g.steps; ++l) {
      const double* grow = pdy + (b * g.steps + l) * g.channels;
      for (std::size_t e = 0; e < g.channels; ++e) grads.dbias[e] += grow[e];
      for (std::size_t k = 0; k < g.taps; ++k) {
        if (l + k < g.pad || l + k - g.pad >= g.steps) continue;
        const std::size_t src = (b * g.steps + l + k - g.pad) * g.channels;
        for (std::size_t e = 0; e < g.channels; ++e) {
          pdx[src + e] += pw[e * g.taps + k] * grow[e];
          pdw[e * g.taps + k] += px[src + e] * grow[e];
        }
      }
    }
  }
  return grads;
}

Tensor normalize(const Tensor& x, NormKind kind, const Tensor& gain, const std::optional<Tensor>& bias,
                 double eps) {
  if (!(eps > 0.0)) throw DomainError("normalize: eps must be positive");
  require_lastdim(x, gain, "normalize");
  if (bias) require_lastdim(x, *bias, "normalize");
  const std::size_t d = x.dim(-1);
  const std::size_t rows = x.size() / d;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double* orow = out.data().data() + r * d;
    if (kind == NormKind::layer) {
      double mean = 0.0;
      for (std::size_t i = 0; i < d; ++i) mean += xr[i];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t i = 0; i < d; ++i) orow[i] = (xr[i] - mean) * inv * gain[i] + (bias ? (*bias)[i] : 0.0);
    } else {
      double ms = 0.0;
      for (std::size_t i = 0; i < d; ++i) ms += xr[i] * xr[i];
      ms /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(ms + eps);
      for (std::size_t i = 0; i < d; ++i) orow[i] = xr[i] * inv * gain[i] + (bias ? (*bias)[i] : 0.0);
    }
  }
  return out;
}

NormGrads normalize_backward(const Tensor& x, NormKind kind, const Tensor& gain, double eps, const Tensor& dy) {
  require_same_shape(x, dy, "normalize_backward");
  const std::size_t d = x.dim(-1);
  const std::size_t rows = x.size() / d;
  const double inv_d = 1.0 / static_cast<double>(d);
  NormGrads g{Tensor(x.shape()), Tensor({d}), Tensor({d})};
  std::vector<double> xhat(d);
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    const double* gr = dy.data().data() + r * d;
    double* dxr = g.dx.data().data() + r * d;
    if (kind == NormKind::layer) {
      double mean = 0.0;
      for (std::size_t i = 0; i < d; ++i) mean += xr[i];
      mean *= inv_d;
      double var = 0.0;
      for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
      var *= inv_d;
      const double inv = 1.0 / std::sqrt(var + eps);
      double sum_dxhat = 0.0;
      double sum_dxhat_xhat = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        xhat[i] = (xr[i] - mean) * inv;
        dxhat[i] = gr[i] * gain[i];
        g.dgain[i] += gr[i] * xhat[i];
        g.dbias[i] += gr[i];
        sum_dxhat += dxhat[i];
        sum_dxhat_xhat += dxhat[i] * xhat[i];
      }
      for (std::size_t i = 0; i < d; ++i) {
        dxr[i] = inv * (dxhat[i] - sum_dxhat * inv_d - xhat[i] * sum_dxhat_xhat * inv_d);
      }
    } else {
      double ms = 0.0;
      for (std::size_t i = 0; i < d; ++i) ms += xr[i] * xr[i];
      ms *= inv_d;
      const double inv = 1.0 / std::sqrt(ms + eps);
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        g.dgain[i] += gr[i] * xr[i] * inv;
        g.dbias[i] += gr[i];
        dot += gr[i] * gain[i] * xr[i];
      }
      const double coeff = inv * inv * inv * dot * inv_d;
      for (std::size_t i = 0; i < d; ++i) dxr[i] = inv * gr[i] * gain[i] - xr[i] * coeff;
    }
  }
  return g;
}

Tensor reverse_time(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("reverse_time: expected [B,L,...], got " + shape_string(x.shape()));
  const std::size_t batch = x.dim(0);
  const std::size_t steps = x.dim(1);
  const std::size_t inner = x.size() / (batch * steps);
  Tensor out(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t l = 0; l < steps; ++l) {
      const double* src = x.data().data() + (b * steps + l) * inner;
      double* dst = out.data().data() + (b * steps + (steps - 1 - l)) * inner;
      std::copy(src, src + inner, dst);
    }
  }
  return out;
}

}  // namespace bimamba
