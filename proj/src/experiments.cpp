// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "bimamba/error.hpp"
#include "bimamba/optim.hpp"
#include "bimamba/seed.hpp"
#include "bimamba/weights.hpp"

namespace bimamba {
namespace {

using nlohmann::json;

// Salts for independent RNG streams.
enum Stream : std::uint64_t {
  kData = 1,
  kInit = 2,
  kBatches = 3,
  kTrainClips = 4,
  kTestClips = 5,
  kTrainSnr = 6,
};

// Adam over a ModelParams bundle, which stores its leaves in a tree rather
// than a flat array.
struct ModelOptimizer {
  explicit ModelOptimizer(ModelParams& p) : params(p) {
    std::vector<Tensor> flat;
    for (Tensor* t : parameter_slots(params)) flat.push_back(*t);
    state = OptimState::for_params(flat);
  }

  void step(const std::vector<Tensor>& grads, double lr) {
    std::vector<Tensor*> slots = parameter_slots(params);
    std::vector<Tensor> flat;
    flat.reserve(slots.size());
    for (Tensor* t : slots) flat.push_back(std::move(*t));
    adam_step(flat, grads, state, lr);
    for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = std::move(flat[i]);
  }

  ModelParams& params;
  OptimState state;
};

bool finite(double v) { return std::isfinite(v); }

}  // namespace

// ---- 2-D classification ----------------------------------------------------

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "gaussians") return DatasetKind::gaussians;
  if (name == "spirals") return DatasetKind::spirals;
  throw ConfigError("unknown dataset kind '" + std::string(name) + "'");
}

std::string dataset_kind_name(DatasetKind kind) { return kind == DatasetKind::gaussians ? "gaussians" : "spirals"; }

Dataset2D gen_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed, double test_fraction,
                      double spiral_scale) {
  if (n < 4 || n % 2 != 0) throw DomainError("gen_dataset: n must be even and >= 4");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw DomainError("gen_dataset: test_fraction must lie in (0, 1)");
  if (!(spiral_scale > 0.0)) throw DomainError("gen_dataset: spiral_scale must be positive");
  std::mt19937_64 rng(mix_seed(seed, kData));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 3.0 * std::numbers::pi);

  Dataset2D ds;
  ds.points = Tensor({n, 2});
  ds.labels = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i < n / 2 ? 1 : 0;
    double x = 0.0, y = 0.0;
    if (kind == DatasetKind::gaussians) {
      const double c = label == 1 ? 2.0 : -2.0;
      const double sd = std::sqrt(0.5);
      x = c + sd * gauss(rng);
      y = c + sd * gauss(rng);
    } else {
      const double theta = angle(rng);
      const double r = spiral_scale * theta / (3.0 * std::numbers::pi);
      const double sign = label == 1 ? 1.0 : -1.0;  // second arm rotated by pi
      x = sign * r * std::cos(theta) + 0.2 * gauss(rng);
      y = sign * r * std::sin(theta) + 0.2 * gauss(rng);
    }
    ds.points[2 * i] = x;
    ds.points[2 * i + 1] = y;
    ds.labels[i] = label;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  ds.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_test));
  ds.test.assign(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
  return ds;
}

void BoundaryConfig::validate() const {
  if (n < 10 || n % 2 != 0) throw ConfigError("boundary: n must be even and >= 10");
  if (epochs == 0) throw ConfigError("boundary: epochs must be positive");
  if (!(lr > 0.0)) throw ConfigError("boundary: lr must be positive");
  if (grid < 2) throw ConfigError("boundary: grid must be >= 2");
  if (!(margin >= 0.0)) throw ConfigError("boundary: margin must be non-negative");
  if (!(spiral_scale > 0.0)) throw ConfigError("boundary: spiral_scale must be positive");
  boundary_model_spec(*this).validate();
}

json BoundaryConfig::to_json() const {
  return {{"dataset", dataset_kind_name(kind)}, {"with_ffn", with_ffn}, {"n", n},          {"epochs", epochs},
          {"lr", lr},                           {"grid", grid},         {"margin", margin}, {"d_model", d_model},
          {"d_state", d_state},                 {"d_ff", d_ff},         {"spiral_scale", spiral_scale}};
}

ModelSpec boundary_model_spec(const BoundaryConfig& cfg) {
  ModelSpec spec;
  spec.mamba.d_model = cfg.d_model;
  spec.mamba.d_state = cfg.d_state;
  spec.block.kind = cfg.with_ffn ? BlockKind::transformer : BlockKind::bare_mamba;
  spec.block.mixer = MixerKind::ext_bimamba;
  spec.block.causal = false;
  spec.block.d_model = cfg.d_model;
  spec.block.d_ff = cfg.d_ff;
  spec.depth = 1;
  spec.d_in = 1;
  spec.d_out = 1;
  spec.pool_mean = true;
  return spec;
}

namespace {

// [count, 2, 1] sequences from selected rows of an [M, 2] point table.
Tensor as_sequences(const Tensor& points, const std::vector<std::size_t>& rows) {
  Tensor X({rows.size(), 2, 1});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X[2 * i] = points[2 * rows[i]];
    X[2 * i + 1] = points[2 * rows[i] + 1];
  }
  return X;
}

Tensor gather_labels(const Tensor& labels, const std::vector<std::size_t>& rows) {
  Tensor y({rows.size()});
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = labels[rows[i]];
  return y;
}

double accuracy(const Tensor& logits, const Tensor& labels) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += (logits[i] > 0.0) == (labels[i] > 0.5);
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace

BoundaryResult run_boundary_experiment(const BoundaryConfig& cfg, std::uint64_t seed, ModelParams* trained) {
  cfg.validate();
  const Dataset2D ds = gen_dataset(cfg.kind, cfg.n, seed, 0.2, cfg.spiral_scale);
  const ModelSpec spec = boundary_model_spec(cfg);
  ModelParams params = init_model(spec, mix_seed(seed, kInit));
  ModelOptimizer opt(params);

  const Tensor X_train = as_sequences(ds.points, ds.train);
  const Tensor y_train = gather_labels(ds.labels, ds.train);
  const std::size_t m = ds.train.size();

  BoundaryResult res;
  res.param_count = count_parameters(params);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape tape;
    const auto w = bind(tape, params);
    const ad::Var logits = ad::reshape(model_forward(tape.constant(X_train), w, spec), {m});
    const ad::Var loss = ad::bce_with_logits(logits, y_train);
    const double lv = loss.value()[0];
    res.loss.push_back(lv);
    if (!finite(lv)) {
      res.diverged = true;
      break;
    }
    tape.backward(loss);
    opt.step(gradients_of(tape, w), cfg.lr);
  }

  res.train_accuracy = accuracy(model_forward(X_train, params, spec), y_train);
  const Tensor test_logits = model_forward(as_sequences(ds.points, ds.test), params, spec);
  res.test_accuracy = accuracy(test_logits, gather_labels(ds.labels, ds.test));

  res.grid = decision_grid(spec, params, ds, cfg.grid, cfg.margin);
  if (trained) *trained = std::move(params);
  return res;
}

DecisionGrid decision_grid(const ModelSpec& spec, const ModelParams& params, const Dataset2D& ds,
                           std::size_t resolution, double margin) {
  if (resolution < 2) throw ConfigError("decision_grid: resolution must be >= 2");
  const std::size_t n = ds.labels.size();
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo, y_lo = x_lo, y_hi = -x_lo;
  for (std::size_t i = 0; i < n; ++i) {
    x_lo = std::min(x_lo, ds.points[2 * i]);
    x_hi = std::max(x_hi, ds.points[2 * i]);
    y_lo = std::min(y_lo, ds.points[2 * i + 1]);
    y_hi = std::max(y_hi, ds.points[2 * i + 1]);
  }
  const double mx = margin * (x_hi - x_lo), my = margin * (y_hi - y_lo);
  DecisionGrid g;
  g.resolution = resolution;
  g.x_lo = x_lo - mx;
  g.x_hi = x_hi + mx;
  g.y_lo = y_lo - my;
  g.y_hi = y_hi + my;
  const std::size_t cells = resolution * resolution;
  Tensor G({cells, 2, 1});
  const double step_x = (g.x_hi - g.x_lo) / static_cast<double>(resolution - 1);
  const double step_y = (g.y_hi - g.y_lo) / static_cast<double>(resolution - 1);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      const double x = g.x_lo + step_x * static_cast<double>(c);
      const double y = g.y_lo + step_y * static_cast<double>(r);
      g.xs.push_back(x);
      g.ys.push_back(y);
      G[2 * (r * resolution + c)] = x;
      G[2 * (r * resolution + c) + 1] = y;
    }
  }
  const Tensor logits = model_forward(G, params, spec);
  for (std::size_t i = 0; i < cells; ++i) {
    g.score.push_back(sigmoid(logits[i]));
    g.pred.push_back(logits[i] > 0.0 ? 1 : 0);
  }
  return g;
}

RunReport boundary_report(const BoundaryConfig& cfg, std::uint64_t seed, const BoundaryResult& result) {
  RunReport rep;
  rep.command = "boundary";
  rep.seed = seed;
  rep.config = cfg.to_json();
  rep.config["classifier"] = cfg.with_ffn ? "BiMamba+FFN" : "BiMamba";
  rep.metrics["train_accuracy"] = result.train_accuracy;
  rep.metrics["test_accuracy"] = result.test_accuracy;
  rep.metrics["final_loss"] = result.loss.empty() ? 0.0 : result.loss.back();
  rep.metrics["param_count"] = result.param_count;
  rep.metrics["grid_cells"] = result.grid.score.size();
  rep.metrics["diverged"] = result.diverged;
  if (result.diverged) rep.fail("training diverged: non-finite loss");
  return rep;
}

std::string grid_csv(const DecisionGrid& grid) {
  std::ostringstream out;
  out << "x,y,pred,score\n";
  out.precision(10);
  for (std::size_t i = 0; i < grid.score.size(); ++i) {
    out << grid.xs[i] << ',' << grid.ys[i] << ',' << grid.pred[i] << ',' << grid.score[i] << '\n';
  }
  return out.str();
}

std::string grid_ppm(const DecisionGrid& grid, const Dataset2D* overlay) {
  const std::size_t n = grid.resolution;
  std::vector<unsigned char> px(3 * n * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double s = grid.score[r * n + c];
      // Image rows run top to bottom; grid rows run bottom to top.
      unsigned char* p = &px[3 * ((n - 1 - r) * n + c)];
      p[0] = static_cast<unsigned char>(std::lround(255.0 * (0.35 + 0.65 * s)));
      p[1] = static_cast<unsigned char>(std::lround(255.0 * 0.35));
      p[2] = static_cast<unsigned char>(std::lround(255.0 * (1.0 - 0.65 * s)));
    }
  }
  if (overlay) {
    const double sx = static_cast<double>(n - 1) / (grid.x_hi - grid.x_lo);
    const double sy = static_cast<double>(n - 1) / (grid.y_hi - grid.y_lo);
    for (std::size_t i = 0; i < overlay->labels.size(); ++i) {
      const long c = std::lround((overlay->points[2 * i] - grid.x_lo) * sx);
      const long r = std::lround((overlay->points[2 * i + 1] - grid.y_lo) * sy);
      if (c < 0 || r < 0 || c >= static_cast<long>(n) || r >= static_cast<long>(n)) continue;
      unsigned char* p = &px[3 * ((n - 1 - static_cast<std::size_t>(r)) * n + static_cast<std::size_t>(c))];
      const bool one = overlay->labels[i] > 0.5;
      p[0] = one ? 110 : 0;
      p[1] = 0;
      p[2] = one ? 0 : 110;
    }
  }
  std::string out = "P6\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
  out.append(px.begin(), px.end());
  return out;
}

// ---- toy denoiser ----------------------------------------------------------

SpectralPair gen_noisy_mixture(std::uint64_t seed, double snr, double dur_s, const StftConfig& stft_cfg) {
  if (!(dur_s >= 0.5)) throw DomainError("gen_noisy_mixture: duration must be >= 0.5 s");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n = static_cast<std::size_t>(std::llround(dur_s * kSampleRate));
  const double two_pi = 2.0 * std::numbers::pi;

  SpectralPair pair;
  pair.seed = seed;
  pair.snr_db = snr;
  pair.clean.assign(n, 0.0);
  for (int k = 0; k < 3; ++k) {
    const double freq = 200.0 + 2800.0 * uni(rng);
    const double amp = 0.5 + 0.5 * uni(rng);
    const double am_rate = 1.0 + 5.0 * uni(rng);
    const double am_depth = 0.3 + 0.6 * uni(rng);
    const double phase = two_pi * uni(rng);
    const double am_phase = two_pi * uni(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / kSampleRate;
      pair.clean[i] += amp * (1.0 + am_depth * std::sin(two_pi * am_rate * t + am_phase)) *
                       std::sin(two_pi * freq * t + phase);
    }
  }
  std::vector<double> noise(n);
  for (double& v : noise) v = gauss(rng);
  double ps = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ps += pair.clean[i] * pair.clean[i];
    pn += noise[i] * noise[i];
  }
  const double g = std::sqrt(ps / (pn * std::pow(10.0, snr / 10.0)));
  pair.noisy.resize(n);
  for (std::size_t i = 0; i < n; ++i) pair.noisy[i] = pair.clean[i] + g * noise[i];

  const Spectrogram noisy = stft(pair.noisy, stft_cfg);
  pair.noisy_mag = noisy.magnitude();
  pair.phase = noisy.phase();
  pair.clean_mag = stft(pair.clean, stft_cfg).magnitude();
  return pair;
}

double snr_db(std::span<const double> ref, std::span<const double> est, std::size_t begin, std::size_t end) {
  if (end > ref.size() || end > est.size() || begin >= end) throw DimensionError("snr_db: bad sample range");
  double s = 0.0, e = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    s += ref[i] * ref[i];
    e += (ref[i] - est[i]) * (ref[i] - est[i]);
  }
  return 10.0 * std::log10(s / e);
}

double snr_improvement(const SpectralPair& pair, const Tensor& mask, const StftConfig& stft_cfg) {
  if (mask.shape() != pair.noisy_mag.shape()) throw DimensionError("snr_improvement: mask shape mismatch");
  Tensor mag(pair.noisy_mag.shape());
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = mask[i] * pair.noisy_mag[i];
  const std::vector<double> enhanced = istft(Spectrogram::from_polar(mag, pair.phase), stft_cfg);
  const auto [lo, hi] = interior_range(pair.noisy_mag.dim(0), stft_cfg);
  return snr_db(pair.clean, enhanced, lo, hi) - snr_db(pair.clean, pair.noisy, lo, hi);
}

Tensor oracle_mask(const SpectralPair& pair) {
  Tensor m(pair.noisy_mag.shape());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double d = pair.noisy_mag[i];
    m[i] = d > 0.0 ? std::clamp(pair.clean_mag[i] / d, 0.0, 1.0) : 1.0;
  }
  return m;
}

void DenoiseConfig::validate() const {
  if (mixers.empty()) throw ConfigError("denoise: no mixers");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) throw ConfigError("denoise: bad d_model / n_heads");
  if (d_state == 0 || reference_d_ff == 0 || max_depth == 0) throw ConfigError("denoise: zero extent");
  if (!(budget_tolerance > 0.0)) throw ConfigError("denoise: budget_tolerance must be positive");
  if (steps == 0 || batch == 0 || warmup_steps == 0) throw ConfigError("denoise: steps, batch, warmup must be positive");
  if (!(lr_scale > 0.0)) throw ConfigError("denoise: lr_scale must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("denoise: alpha must lie in (0, 1]");
  if (!(dur_s >= 0.5)) throw ConfigError("denoise: dur_s must be >= 0.5");
  if (!(train_snr_lo <= train_snr_hi)) throw ConfigError("denoise: empty training SNR range");
}

json DenoiseConfig::to_json() const {
  std::vector<std::string> names;
  for (MixerKind m : mixers) names.emplace_back(mixer_kind_name(m));
  return {{"mixers", names},
          {"d_model", d_model},
          {"n_heads", n_heads},
          {"d_state", d_state},
          {"reference_d_ff", reference_d_ff},
          {"max_depth", max_depth},
          {"budget_tolerance", budget_tolerance},
          {"steps", steps},
          {"batch", batch},
          {"warmup_steps", warmup_steps},
          {"lr_scale", lr_scale},
          {"alpha", alpha},
          {"dur_s", dur_s},
          {"train_snr_lo", train_snr_lo},
          {"train_snr_hi", train_snr_hi},
          {"test_snr", test_snr}};
}

namespace {

ModelSpec denoise_spec(const DenoiseConfig& cfg, MixerKind mixer, std::size_t depth, std::size_t d_ff) {
  const StftConfig stft_cfg;
  ModelSpec spec;
  spec.mamba.d_model = cfg.d_model;
  spec.mamba.d_state = cfg.d_state;
  spec.block.kind = BlockKind::transformer;
  spec.block.mixer = mixer;
  spec.block.causal = mixer == MixerKind::mamba;
  spec.block.d_model = cfg.d_model;
  spec.block.n_heads = cfg.n_heads;
  spec.block.d_ff = d_ff;
  spec.depth = depth;
  spec.d_in = stft_cfg.bins();
  spec.d_out = stft_cfg.bins();
  return spec;
}

std::size_t stack_params(const ModelSpec& spec) { return spec.depth * layer_param_count(spec.block, spec.mamba); }

// [B, frames, bins] stack of one magnitude field, raised to alpha.
Tensor stack_mag(const std::vector<const SpectralPair*>& batch, Tensor SpectralPair::*field, double alpha) {
  const Shape& s = (batch.front()->*field).shape();
  Tensor out({batch.size(), s[0], s[1]});
  const std::size_t per = s[0] * s[1];
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor c = power_law_compress(batch[b]->*field, alpha);
    std::copy(c.data().begin(), c.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return out;
}

// Floor under the compressed magnitude; keeps the power's gradient bounded.
constexpr double kMagFloor = 1e-6;

}  // namespace

std::vector<DenoiseArm> match_budgets(const DenoiseConfig& cfg) {
  cfg.validate();
  const std::size_t target = stack_params(denoise_spec(cfg, MixerKind::ext_bimamba, 1, cfg.reference_d_ff));
  std::vector<DenoiseArm> arms;
  for (MixerKind mixer : cfg.mixers) {
    DenoiseArm best;
    double best_dev = std::numeric_limits<double>::infinity();
    for (std::size_t depth = 1; depth <= cfg.max_depth; ++depth) {
      for (std::size_t d_ff = 8; d_ff <= 1024; d_ff += 8) {
        const ModelSpec spec = denoise_spec(cfg, mixer, depth, d_ff);
        const std::size_t n = stack_params(spec);
        const double dev = (static_cast<double>(n) - static_cast<double>(target)) / static_cast<double>(target);
        if (std::abs(dev) < std::abs(best_dev)) {
          best_dev = dev;
          best = {mixer, spec, n, dev};
        }
      }
    }
    if (std::abs(best_dev) > cfg.budget_tolerance) {
      throw ConfigError("denoise: cannot match the parameter budget for " + std::string(mixer_kind_name(mixer)));
    }
    arms.push_back(best);
  }
  return arms;
}

Tensor predict_mask(const ModelSpec& spec, const ModelParams& params, const SpectralPair& pair, double alpha) {
  const Tensor x = stack_mag({&pair}, &SpectralPair::noisy_mag, alpha);
  const Tensor logits = model_forward(x, params, spec);
  Tensor mask(pair.noisy_mag.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = sigmoid(logits[i]);
  return mask;
}

DenoiseResult run_denoise_experiment(const DenoiseConfig& cfg, std::size_t n_train, std::size_t n_test,
                                     std::uint64_t seed) {
  cfg.validate();
  if (n_train == 0 || n_test == 0) throw ConfigError("denoise: n_train and n_test must be positive");
  const std::vector<DenoiseArm> arms = match_budgets(cfg);

  std::mt19937_64 snr_rng(mix_seed(seed, kTrainSnr));
  std::uniform_real_distribution<double> snr_dist(cfg.train_snr_lo, cfg.train_snr_hi);
  std::vector<SpectralPair> train, test;
  for (std::size_t i = 0; i < n_train; ++i) {
    const double snr = snr_dist(snr_rng);
    train.push_back(gen_noisy_mixture(mix_seed(mix_seed(seed, kTrainClips), i), snr, cfg.dur_s));
  }
  for (std::size_t i = 0; i < n_test; ++i) {
    test.push_back(gen_noisy_mixture(mix_seed(mix_seed(seed, kTestClips), i), cfg.test_snr, cfg.dur_s));
  }

  DenoiseResult result;
  result.reference_budget = stack_params(denoise_spec(cfg, MixerKind::ext_bimamba, 1, cfg.reference_d_ff));
  const StftConfig stft_cfg;
  const auto [lo, hi] = interior_range(test.front().noisy_mag.dim(0), stft_cfg);
  for (const SpectralPair& p : test) {
    result.input_snr_db += snr_db(p.clean, p.noisy, lo, hi) / static_cast<double>(n_test);
    result.oracle_improvement_db += snr_improvement(p, oracle_mask(p)) / static_cast<double>(n_test);
  }
  {
    // Passthrough: a model whose head is forced to a large positive bias.
    ModelSpec spec = arms.front().model;
    ModelParams p = init_model(spec, mix_seed(seed, kInit));
    std::fill(p.head_W->data().begin(), p.head_W->data().end(), 0.0);
    std::fill(p.head_b->data().begin(), p.head_b->data().end(), 40.0);
    for (const SpectralPair& t : test) {
      result.identity_improvement_db += snr_improvement(t, predict_mask(spec, p, t, cfg.alpha)) / static_cast<double>(n_test);
    }
  }

  for (const DenoiseArm& arm : arms) {
    ArmOutcome out;
    out.arm = arm;
    // Same initial stream salt and batch order for every arm.
    ModelParams params = init_model(arm.model, mix_seed(seed, kInit));
    out.total_params = count_parameters(params);
    ModelOptimizer opt(params);
    std::mt19937_64 batch_rng(mix_seed(seed, kBatches));
    std::uniform_int_distribution<std::size_t> pick(0, n_train - 1);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      std::vector<const SpectralPair*> batch;
      for (std::size_t b = 0; b < cfg.batch; ++b) batch.push_back(&train[pick(batch_rng)]);
      const Tensor features = stack_mag(batch, &SpectralPair::noisy_mag, cfg.alpha);
      const Tensor target = stack_mag(batch, &SpectralPair::clean_mag, cfg.alpha);
      const Tensor noisy = stack_mag(batch, &SpectralPair::noisy_mag, 1.0);

      ad::Tape tape;
      const auto w = bind(tape, params);
      const ad::Var mask = ad::activation(model_forward(tape.constant(features), w, arm.model), Activation::sigmoid);
      const ad::Var est = ad::power(ad::mul(mask, tape.constant(noisy)), cfg.alpha, kMagFloor);
      const ad::Var loss = ad::mse(est, tape.constant(target));
      const double lv = loss.value()[0];
      out.loss.push_back(lv);
      if (!finite(lv)) {
        out.diverged = true;
        break;
      }
      tape.backward(loss);
      const double lr = cfg.lr_scale * warmup_lr(static_cast<std::int64_t>(step + 1),
                                                 static_cast<std::int64_t>(cfg.d_model),
                                                 static_cast<std::int64_t>(cfg.warmup_steps));
      opt.step(gradients_of(tape, w), lr);
    }
    out.final_loss = out.loss.empty() ? 0.0 : out.loss.back();
    if (!out.diverged) {
      for (const SpectralPair& t : test) {
        out.improvement_db += snr_improvement(t, predict_mask(arm.model, params, t, cfg.alpha)) /
                              static_cast<double>(n_test);
      }
    } else {
      out.improvement_db = std::numeric_limits<double>::quiet_NaN();
    }
    result.arms.push_back(std::move(out));
  }
  return result;
}

RunReport denoise_report(const DenoiseConfig& cfg, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                         const DenoiseResult& result) {
  RunReport rep;
  rep.command = "denoise";
  rep.seed = seed;
  rep.config = cfg.to_json();
  rep.config["n_train"] = n_train;
  rep.config["n_test"] = n_test;
  rep.metrics["reference_budget"] = result.reference_budget;
  rep.metrics["input_snr_db"] = result.input_snr_db;
  rep.metrics["identity_improvement_db"] = result.identity_improvement_db;
  rep.metrics["oracle_improvement_db"] = result.oracle_improvement_db;
  json arms = json::array();
  for (const ArmOutcome& a : result.arms) {
    json j;
    j["mixer"] = mixer_kind_name(a.arm.mixer);
    j["causal"] = a.arm.model.block.causal;
    j["depth"] = a.arm.model.depth;
    j["d_ff"] = a.arm.model.block.d_ff;
    j["stack_params"] = a.arm.stack_params;
    j["total_params"] = a.total_params;
    j["budget_deviation"] = a.arm.budget_deviation;
    j["diverged"] = a.diverged;
    j["final_loss"] = a.final_loss;
    if (a.diverged) {
      j["improvement_db"] = nullptr;
      rep.fail(std::string(mixer_kind_name(a.arm.mixer)) + ": training diverged");
    } else {
      j["improvement_db"] = a.improvement_db;
    }
    arms.push_back(j);
  }
  rep.metrics["arms"] = arms;
  return rep;
}

}  // namespace bimamba
