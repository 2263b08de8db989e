// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <new>
#include <random>
#include <sstream>

#include "bimamba/error.hpp"
#include "bimamba/parallel.hpp"

namespace bimamba {

std::uint64_t mhsa_macs(std::size_t steps, std::size_t d_model) {
  const std::uint64_t L = steps, D = d_model;
  return 4 * L * D * D + 2 * L * L * D;
}

std::uint64_t mamba_projection_macs(const MambaConfig& cfg, std::size_t steps) {
  const std::uint64_t D = cfg.d_model, E = cfg.d_inner();
  return steps * (2 * D * E + E * D);
}

std::uint64_t ssm_branch_macs(const MambaConfig& cfg, std::size_t steps) {
  const std::uint64_t E = cfg.d_inner(), N = cfg.d_state, R = cfg.dt_rank();
  // conv taps, W_B and W_C, W_1 and W_2, scan (A h, B u, C h)
  return steps * (E * cfg.d_conv + 2 * E * N + 2 * E * R + 3 * E * N);
}

std::uint64_t mamba_variant_macs(MambaVariant variant, const MambaConfig& cfg, std::size_t steps) {
  const std::uint64_t proj = mamba_projection_macs(cfg, steps);
  const std::uint64_t branch = ssm_branch_macs(cfg, steps);
  switch (variant) {
    case MambaVariant::mamba:
      return proj + branch;
    case MambaVariant::inn:
      return proj + 2 * branch;
    case MambaVariant::ext:
      return 2 * (proj + branch);
  }
  return 0;
}

std::uint64_t ffn_macs(std::size_t steps, std::size_t d_model, std::size_t d_ff) {
  return 2ULL * steps * d_model * d_ff;
}

std::uint64_t conv_module_macs(std::size_t steps, std::size_t d_model, std::size_t kernel) {
  const std::uint64_t L = steps, D = d_model;
  return L * (2 * D * D + D * kernel + D * D);
}

std::uint64_t mixer_macs(const BlockSpec& spec, const MambaConfig& cfg, std::size_t steps) {
  switch (spec.mixer) {
    case MixerKind::mhsa:
      return mhsa_macs(steps, spec.d_model);
    case MixerKind::mamba:
      return mamba_variant_macs(MambaVariant::mamba, cfg, steps);
    case MixerKind::inn_bimamba:
      return mamba_variant_macs(MambaVariant::inn, cfg, steps);
    case MixerKind::ext_bimamba:
      return mamba_variant_macs(MambaVariant::ext, cfg, steps);
  }
  return 0;
}

std::uint64_t count_macs(const BlockSpec& spec, const MambaConfig& cfg, std::size_t steps) {
  spec.validate(cfg);
  std::uint64_t n = mixer_macs(spec, cfg, steps);
  const std::uint64_t ffn = ffn_macs(steps, spec.d_model, spec.d_ff);
  switch (spec.kind) {
    case BlockKind::bare_mamba:
      break;
    case BlockKind::transformer:
      n += ffn;
      break;
    case BlockKind::conformer:
      n += (spec.use_macaron ? 2 : 1) * ffn + conv_module_macs(steps, spec.d_model, spec.conv_kernel);
      break;
  }
  return n;
}

SlopeFit fit_slope(std::span<const double> lengths, std::span<const double> times) {
  if (lengths.size() != times.size()) throw DimensionError("fit_slope: lengths and times differ in size");
  if (lengths.size() < 4) throw DomainError("fit_slope: need at least 4 points");
  const std::size_t n = lengths.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(lengths[i] > 0.0) || !(times[i] > 0.0)) throw DomainError("fit_slope: values must be positive");
    x[i] = std::log(lengths[i]);
    y[i] = std::log(times[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("fit_slope: lengths are all equal");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  fit.points = n;
  return fit;
}

namespace {

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

using Forward = std::function<Tensor(const Tensor&)>;

Forward make_forward(const std::string& mixer, const MambaConfig& cfg, const ScalingOptions& opt,
                     std::mt19937_64& rng) {
  if (mixer == "mhsa") {
    const std::size_t d = cfg.d_model;
    if (opt.n_heads == 0 || d % opt.n_heads != 0) throw ConfigError("bench: d_model not divisible by n_heads");
    MhsaWeights<Tensor> w{init_linear(d, d, rng), init_linear(d, d, rng), init_linear(d, d, rng),
                          init_linear(d, d, rng)};
    const std::size_t heads = opt.n_heads;
    return [w, heads](const Tensor& H) { return mhsa_forward(H, w, heads, false); };
  }
  if (mixer == "mamba" || mixer == "mamba_parallel") {
    MambaConfig c = cfg;
    c.scan_chunk = mixer == "mamba" ? 0 : opt.parallel_chunk;
    const MambaParams p = init_params(c, rng());
    return [p, c](const Tensor& H) { return mamba_forward(H, p, c); };
  }
  if (mixer == "inn_bimamba") {
    const InnBiMambaParams p = init_inn_params(cfg, rng());
    return [p, cfg](const Tensor& H) { return inn_bimamba_forward(H, p, cfg); };
  }
  if (mixer == "ext_bimamba") {
    const ExtBiMambaParams p = init_ext_params(cfg, rng());
    return [p, cfg](const Tensor& H) { return ext_bimamba_forward(H, p, cfg); };
  }
  throw ConfigError("bench: unknown mixer '" + mixer + "'");
}

std::uint64_t row_macs(const std::string& mixer, const MambaConfig& cfg, std::size_t L, std::size_t batch) {
  std::uint64_t per = 0;
  if (mixer == "mhsa") per = mhsa_macs(L, cfg.d_model);
  else if (mixer == "mamba" || mixer == "mamba_parallel") per = mamba_variant_macs(MambaVariant::mamba, cfg, L);
  else if (mixer == "inn_bimamba") per = mamba_variant_macs(MambaVariant::inn, cfg, L);
  else per = mamba_variant_macs(MambaVariant::ext, cfg, L);
  return per * batch;
}

CostRow time_row(const std::string& mixer, const Forward& fwd, const MambaConfig& cfg, std::size_t L,
                 const ScalingOptions& opt, std::size_t threads, std::mt19937_64& rng) {
  CostRow row;
  row.mixer = mixer;
  row.L = L;
  row.macs = row_macs(mixer, cfg, L, opt.batch);
  row.reps = opt.reps;
  row.warmups = opt.warmups;
  row.threads = threads;
  try {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Tensor H({opt.batch, L, cfg.d_model});
    for (double& v : H.data()) v = gauss(rng);
    ScopedWorkerLimit limit(threads);
    for (std::size_t i = 0; i < opt.warmups; ++i) fwd(H);
    std::vector<double> ms;
    for (std::size_t i = 0; i < opt.reps; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor out = fwd(H);
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    row.wall_ms = percentile(ms, 0.5);
    row.iqr_ms = percentile(ms, 0.75) - percentile(ms, 0.25);
  } catch (const std::bad_alloc&) {
    row.skipped = true;
    row.note = "allocation failure";
  }
  return row;
}

}  // namespace

CostReport time_scaling(const std::vector<std::string>& mixers, const std::vector<std::size_t>& lengths,
                        const MambaConfig& cfg, std::uint64_t seed, const ScalingOptions& options) {
  cfg.validate();
  if (options.reps < 5) throw ConfigError("bench: reps must be >= 5");
  if (lengths.size() < 4) throw ConfigError("bench: need at least 4 lengths");
  if (!std::is_sorted(lengths.begin(), lengths.end()) ||
      std::adjacent_find(lengths.begin(), lengths.end()) != lengths.end() || lengths.front() == 0) {
    throw ConfigError("bench: lengths must be positive and strictly ascending");
  }
  if (lengths.back() < 16 * lengths.front()) throw ConfigError("bench: lengths must span at least 16x");

  std::vector<std::string> all = mixers;
  if (options.parallel_row) all.push_back("mamba_parallel");
  CostReport report;
  std::mt19937_64 rng(seed);
  for (const std::string& mixer : all) {
    const Forward fwd = make_forward(mixer, cfg, options, rng);
    const std::size_t threads = mixer == "mamba_parallel" ? max_workers() : 1;
    std::vector<double> ls, ts;
    for (std::size_t L : lengths) {
      CostRow row = time_row(mixer, fwd, cfg, L, options, threads, rng);
      if (!row.skipped) {
        ls.push_back(static_cast<double>(L));
        ts.push_back(row.wall_ms);
      }
      report.rows.push_back(std::move(row));
    }
    if (mixer != "mamba_parallel" && ls.size() >= 4) report.fits.push_back({mixer, fit_slope(ls, ts)});
  }
  return report;
}

std::string cost_report_csv(const CostReport& report) {
  std::ostringstream out;
  out << "mixer,L,macs,wall_ms,reps,slope_group\n";
  out << std::setprecision(6);
  for (const CostRow& r : report.rows) {
    const std::string group = r.mixer == "mamba_parallel" ? "extra" : r.mixer;
    out << r.mixer << ',' << r.L << ',' << r.macs << ',';
    if (r.skipped) out << "nan";
    else out << r.wall_ms;
    out << ',' << r.reps << ',' << group << '\n';
  }
  return out.str();
}

}  // namespace bimamba
