// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bimamba/error.hpp"
#include "bimamba/parallel.hpp"

namespace bimamba::ssm {
namespace {

void expect_shape(const Tensor& t, const Shape& shape, const char* name) {
  if (t.shape() != shape) {
    throw DimensionError(std::string("ssm: ") + name + " has shape " + shape_string(t.shape()) + ", expected " +
                         shape_string(shape));
  }
}

void require_positive_delta(const Tensor& delta) {
  for (double v : delta.data()) {
    if (!(v > 0.0)) throw DomainError("ssm: delta must be strictly positive");
  }
}

// Blelloch exclusive scan over `count` elements of `width` lanes, in place.
// On return element i holds the composition of elements [0, i).
void blelloch_exclusive(std::vector<double>& a, std::vector<double>& b, std::size_t count, std::size_t width) {
  std::size_t padded = 1;
  while (padded < count) padded *= 2;
  a.resize(padded * width, 1.0);
  b.resize(padded * width, 0.0);
  for (std::size_t d = 1; d < padded; d *= 2) {
    for (std::size_t i = 2 * d - 1; i < padded; i += 2 * d) {
      double* al = a.data() + (i - d) * width;
      double* bl = b.data() + (i - d) * width;
      double* ar = a.data() + i * width;
      double* br = b.data() + i * width;
      for (std::size_t w = 0; w < width; ++w) {
        br[w] = ar[w] * bl[w] + br[w];
        ar[w] = al[w] * ar[w];
      }
    }
  }
  std::fill(a.begin() + static_cast<std::ptrdiff_t>((padded - 1) * width), a.end(), 1.0);
  std::fill(b.begin() + static_cast<std::ptrdiff_t>((padded - 1) * width), b.end(), 0.0);
  std::vector<double> ta(width);
  std::vector<double> tb(width);
  for (std::size_t d = padded / 2; d >= 1; d /= 2) {
    for (std::size_t i = 2 * d - 1; i < padded; i += 2 * d) {
      double* al = a.data() + (i - d) * width;
      double* bl = b.data() + (i - d) * width;
      double* ar = a.data() + i * width;
      double* br = b.data() + i * width;
      std::copy(al, al + width, ta.begin());
      std::copy(bl, bl + width, tb.begin());
      std::copy(ar, ar + width, al);
      std::copy(br, br + width, bl);
      // right <- combine(parent prefix, left aggregate)
      for (std::size_t w = 0; w < width; ++w) {
        br[w] = ta[w] * br[w] + tb[w];
        ar[w] = ar[w] * ta[w];
      }
    }
    if (d == 1) break;
  }
}

}  // namespace

void SsmInputs::validate() const {
  if (u.rank() != 3) throw DimensionError("ssm: u must be [B,L,E], got " + shape_string(u.shape()));
  if (A.rank() != 2) throw DimensionError("ssm: A must be [E,N], got " + shape_string(A.shape()));
  const std::size_t bsz = u.dim(0);
  const std::size_t len = u.dim(1);
  const std::size_t e = u.dim(2);
  const std::size_t n = A.dim(1);
  expect_shape(delta, {bsz, len, e}, "delta");
  expect_shape(A, {e, n}, "A");
  expect_shape(B, {bsz, len, n}, "B");
  expect_shape(C, {bsz, len, n}, "C");
  expect_shape(D, {e}, "D");
  require_positive_delta(delta);
  for (double v : A.data()) {
    if (!(v < 0.0)) throw DomainError("ssm: A must be strictly negative");
  }
}

Discretized discretize(const Tensor& A, const Tensor& delta, const Tensor& B) {
  if (A.rank() != 2 || delta.rank() != 3 || B.rank() != 3) {
    throw DimensionError("discretize: expected A[E,N], delta[B,L,E], B[B,L,N]");
  }
  const std::size_t bsz = delta.dim(0);
  const std::size_t len = delta.dim(1);
  const std::size_t e_dim = delta.dim(2);
  const std::size_t n_dim = A.dim(1);
  expect_shape(A, {e_dim, n_dim}, "A");
  expect_shape(B, {bsz, len, n_dim}, "B");
  require_positive_delta(delta);
  Discretized out{Tensor({bsz, len, e_dim, n_dim}), Tensor({bsz, len, e_dim, n_dim})};
  for (std::size_t bl = 0; bl < bsz * len; ++bl) {
    for (std::size_t e = 0; e < e_dim; ++e) {
      const double dt = delta[bl * e_dim + e];
      for (std::size_t n = 0; n < n_dim; ++n) {
        const std::size_t i = (bl * e_dim + e) * n_dim + n;
        out.Abar[i] = std::exp(dt * A[e * n_dim + n]);
        out.Bbar[i] = dt * B[bl * n_dim + n];
      }
    }
  }
  return out;
}

ScanElement ScanElement::identity(const Shape& shape) { return {Tensor(shape, 1.0), Tensor(shape, 0.0)}; }

ScanElement combine(const ScanElement& x, const ScanElement& y) {
  if (x.a.shape() != y.a.shape() || x.b.shape() != y.b.shape() || x.a.shape() != x.b.shape()) {
    throw DimensionError("scan combine: mismatched element shapes");
  }
  ScanElement out{Tensor(x.a.shape()), Tensor(x.b.shape())};
  for (std::size_t i = 0; i < x.a.size(); ++i) {
    out.a[i] = x.a[i] * y.a[i];
    out.b[i] = y.a[i] * x.b[i] + y.b[i];
  }
  return out;
}

void linear_recurrence(const double* a, const double* b, double* h, std::size_t steps, std::size_t width,
                       std::size_t chunk, bool reverse) {
  if (steps == 0) return;
  auto row = [&](std::size_t i) { return reverse ? steps - 1 - i : i; };
  if (chunk == 0 || chunk >= steps) {
    std::vector<double> state(width, 0.0);
    for (std::size_t i = 0; i < steps; ++i) {
      const std::size_t r = row(i) * width;
      for (std::size_t w = 0; w < width; ++w) {
        state[w] = a[r + w] * state[w] + b[r + w];
        h[r + w] = state[w];
      }
    }
    return;
  }

  const std::size_t n_chunks = (steps + chunk - 1) / chunk;
  std::vector<double> prod(steps * width);
  std::vector<double> agg_a(n_chunks * width);
  std::vector<double> agg_b(n_chunks * width);

  // Pass 1: independent local scans.
  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(steps, begin + chunk);
    std::vector<double> pa(width, 1.0);
    std::vector<double> hb(width, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t r = row(i) * width;
      for (std::size_t w = 0; w < width; ++w) {
        hb[w] = a[r + w] * hb[w] + b[r + w];
        pa[w] = pa[w] * a[r + w];
        h[r + w] = hb[w];
        prod[r + w] = pa[w];
      }
    }
    std::copy(pa.begin(), pa.end(), agg_a.begin() + static_cast<std::ptrdiff_t>(c * width));
    std::copy(hb.begin(), hb.end(), agg_b.begin() + static_cast<std::ptrdiff_t>(c * width));
  });

  // Pass 2: carries into each chunk.
  blelloch_exclusive(agg_a, agg_b, n_chunks, width);

  // Pass 3: fold each carry into its chunk.
  parallel_for(n_chunks, [&](std::size_t c) {
    if (c == 0) return;
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(steps, begin + chunk);
    const double* carry = agg_b.data() + c * width;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t r = row(i) * width;
      for (std::size_t w = 0; w < width; ++w) h[r + w] = prod[r + w] * carry[w] + h[r + w];
    }
  });
}

Tensor selective_scan_sequential(const SsmInputs& in) {
  in.validate();
  const std::size_t bsz = in.batch();
  const std::size_t len = in.steps();
  const std::size_t e_dim = in.channels();
  const std::size_t n_dim = in.state();
  Tensor y({bsz, len, e_dim});
  std::vector<double> h(e_dim * n_dim);
  for (std::size_t b = 0; b < bsz; ++b) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t l = 0; l < len; ++l) {
      const std::size_t bl = b * len + l;
      const double* bsel = in.B.data().data() + bl * n_dim;
      const double* csel = in.C.data().data() + bl * n_dim;
      for (std::size_t e = 0; e < e_dim; ++e) {
        const double dt = in.delta[bl * e_dim + e];
        const double x = in.u[bl * e_dim + e];
        double* he = h.data() + e * n_dim;
        double acc = 0.0;
        for (std::size_t n = 0; n < n_dim; ++n) {
          const double abar = std::exp(dt * in.A[e * n_dim + n]);
          const double bbar = dt * bsel[n];
          he[n] = abar * he[n] + bbar * x;
          acc += csel[n] * he[n];
        }
        y[bl * e_dim + e] = acc + in.D[e] * x;
      }
    }
  }
  return y;
}

ScanTrace selective_scan_traced(const SsmInputs& in, ScanSchedule schedule) {
  in.validate();
  const std::size_t bsz = in.batch();
  const std::size_t len = in.steps();
  const std::size_t e_dim = in.channels();
  const std::size_t n_dim = in.state();
  const std::size_t width = e_dim * n_dim;
  ScanTrace trace{Tensor({bsz, len, e_dim}), Tensor({bsz, len, e_dim, n_dim})};
  std::vector<double> a(len * width);
  std::vector<double> bu(len * width);
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t l = 0; l < len; ++l) {
      const std::size_t bl = b * len + l;
      for (std::size_t e = 0; e < e_dim; ++e) {
        const double dt = in.delta[bl * e_dim + e];
        const double x = in.u[bl * e_dim + e];
        for (std::size_t n = 0; n < n_dim; ++n) {
          const std::size_t i = l * width + e * n_dim + n;
          a[i] = std::exp(dt * in.A[e * n_dim + n]);
          bu[i] = dt * in.B[bl * n_dim + n] * x;
        }
      }
    }
    double* h = trace.h.data().data() + b * len * width;
    linear_recurrence(a.data(), bu.data(), h, len, width, schedule.chunk, false);
    for (std::size_t l = 0; l < len; ++l) {
      const std::size_t bl = b * len + l;
      const double* csel = in.C.data().data() + bl * n_dim;
      for (std::size_t e = 0; e < e_dim; ++e) {
        const double* he = h + l * width + e * n_dim;
        double acc = 0.0;
        for (std::size_t n = 0; n < n_dim; ++n) acc += csel[n] * he[n];
        trace.y[bl * e_dim + e] = acc + in.D[e] * in.u[bl * e_dim + e];
      }
    }
  }
  return trace;
}

Tensor selective_scan_parallel(const SsmInputs& in, std::size_t chunk) {
  if (chunk < 1) throw DomainError("selective_scan_parallel: chunk must be >= 1");
  return selective_scan_traced(in, ScanSchedule{chunk}).y;
}

ScanGrads selective_scan_backward(const SsmInputs& in, const ScanTrace& trace, const Tensor& dy,
                                  ScanSchedule schedule) {
  const std::size_t bsz = in.batch();
  const std::size_t len = in.steps();
  const std::size_t e_dim = in.channels();
  const std::size_t n_dim = in.state();
  const std::size_t width = e_dim * n_dim;
  expect_shape(dy, {bsz, len, e_dim}, "dy");
  ScanGrads g{Tensor(in.u.shape()), Tensor(in.delta.shape()), Tensor(in.A.shape()),
              Tensor(in.B.shape()),  Tensor(in.C.shape()),     Tensor(in.D.shape())};
  std::vector<double> a(len * width);
  std::vector<double> src(len * width);
  std::vector<double> adj(len * width);
  for (std::size_t b = 0; b < bsz; ++b) {
    const double* h = trace.h.data().data() + b * len * width;
    for (std::size_t l = 0; l < len; ++l) {
      const std::size_t bl = b * len + l;
      for (std::size_t e = 0; e < e_dim; ++e) {
        const double gy = dy[bl * e_dim + e];
        for (std::size_t n = 0; n < n_dim; ++n) {
          const std::size_t i = l * width + e * n_dim + n;
          src[i] = in.C[bl * n_dim + n] * gy;
          // coefficient linking g[l] to g[l+1]
          a[i] = l + 1 < len ? std::exp(in.delta[(bl + 1) * e_dim + e] * in.A[e * n_dim + n]) : 0.0;
        }
      }
    }
    linear_recurrence(a.data(), src.data(), adj.data(), len, width, schedule.chunk, true);

    for (std::size_t l = 0; l < len; ++l) {
      const std::size_t bl = b * len + l;
      const double* bsel = in.B.data().data() + bl * n_dim;
      for (std::size_t e = 0; e < e_dim; ++e) {
        const double dt = in.delta[bl * e_dim + e];
        const double x = in.u[bl * e_dim + e];
        const double gy = dy[bl * e_dim + e];
        double du = gy * in.D[e];
        double ddt = 0.0;
        g.dD[e] += gy * x;
        for (std::size_t n = 0; n < n_dim; ++n) {
          const std::size_t i = l * width + e * n_dim + n;
          const double gh = adj[i];
          const double a_en = in.A[e * n_dim + n];
          const double abar = std::exp(dt * a_en);
          const double h_prev = l > 0 ? h[i - width] : 0.0;
          du += gh * dt * bsel[n];
          g.dB[bl * n_dim + n] += gh * dt * x;
          const double gabar = gh * h_prev * abar;
          ddt += gh * bsel[n] * x + gabar * a_en;
          g.dA[e * n_dim + n] += gabar * dt;
          g.dC[bl * n_dim + n] += gy * h[i];
        }
        g.du[bl * e_dim + e] = du;
        g.ddelta[bl * e_dim + e] = ddt;
      }
    }
  }
  return g;
}

Tensor lti_kernel(const Tensor& Abar, const Tensor& Bbar, const Tensor& C, std::size_t length) {
  if (length < 1) throw DomainError("lti_kernel: length must be >= 1");
  if (Abar.rank() != 2 || Bbar.shape() != Abar.shape() || C.rank() != 1 || C.dim(0) != Abar.dim(1)) {
    throw DimensionError("lti_kernel: expected Abar[E,N], Bbar[E,N], C[N]");
  }
  const std::size_t e_dim = Abar.dim(0);
  const std::size_t n_dim = Abar.dim(1);
  Tensor K({e_dim, length});
  for (std::size_t e = 0; e < e_dim; ++e) {
    for (std::size_t n = 0; n < n_dim; ++n) {
      const double a = Abar[e * n_dim + n];
      double term = C[n] * Bbar[e * n_dim + n];
      for (std::size_t j = 0; j < length; ++j) {
        K[e * length + j] += term;
        term *= a;
      }
    }
  }
  return K;
}

Tensor lti_apply(const Tensor& x, const Tensor& K) {
  if (x.rank() != 3 || K.rank() != 2 || K.dim(0) != x.dim(2)) {
    throw DimensionError("lti_apply: expected x[B,L,E] and K[E,L]");
  }
  const std::size_t bsz = x.dim(0);
  const std::size_t len = x.dim(1);
  const std::size_t e_dim = x.dim(2);
  if (K.dim(1) != len) {
    throw DimensionError("lti_apply: kernel length " + std::to_string(K.dim(1)) + " != sequence length " +
                         std::to_string(len));
  }
  Tensor y(x.shape());
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t e = 0; e < e_dim; ++e) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= l; ++j) acc += K[e * len + j] * x[(b * len + l - j) * e_dim + e];
        y[(b * len + l) * e_dim + e] = acc;
      }
    }
  }
  return y;
}

}  // namespace bimamba::ssm
