// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/audio.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "bimamba/error.hpp"

namespace bimamba {
namespace {

// FFTW planning is not thread-safe; execution through the new-array interface is.
struct Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

template <class T>
struct FftwFree {
  void operator()(T* p) const { fftw_free(p); }
};
template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree<T>>;

FftwBuffer<double> alloc_real(std::size_t n) { return FftwBuffer<double>(fftw_alloc_real(n)); }
FftwBuffer<fftw_complex> alloc_complex(std::size_t n) { return FftwBuffer<fftw_complex>(fftw_alloc_complex(n)); }

const Plans& plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, Plans> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto re = alloc_real(n);
  auto cx = alloc_complex(n / 2 + 1);
  Plans p;
  const int ni = static_cast<int>(n);
  p.forward = fftw_plan_dft_r2c_1d(ni, re.get(), cx.get(), FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_c2r_1d(ni, cx.get(), re.get(), FFTW_ESTIMATE);
  if (!p.forward || !p.inverse) throw Error("fftw: planning failed for size " + std::to_string(n));
  return cache.emplace(n, p).first->second;
}

}  // namespace

std::size_t StftConfig::frames_for(std::size_t samples) const {
  if (samples < win) throw DomainError("stft: signal of " + std::to_string(samples) + " samples is shorter than window");
  return 1 + (samples - win) / hop;
}

std::size_t StftConfig::samples_for(std::size_t frames) const { return (frames - 1) * hop + win; }

void StftConfig::validate() const {
  if (win < 2 || win % 2 != 0) throw ConfigError("stft: window length must be even and >= 2");
  if (hop == 0 || hop > win) throw ConfigError("stft: hop must lie in [1, win]");
}

Tensor Spectrogram::magnitude() const {
  Tensor m({frames, bins});
  for (std::size_t i = 0; i < data.size(); ++i) m[i] = std::abs(data[i]);
  return m;
}

Tensor Spectrogram::phase() const {
  Tensor p({frames, bins});
  for (std::size_t i = 0; i < data.size(); ++i) p[i] = std::arg(data[i]);
  return p;
}

Spectrogram Spectrogram::from_polar(const Tensor& magnitude, const Tensor& phase) {
  if (magnitude.rank() != 2 || magnitude.shape() != phase.shape()) {
    throw DimensionError("from_polar: magnitude and phase must share shape [frames, bins]");
  }
  Spectrogram s;
  s.frames = magnitude.dim(0);
  s.bins = magnitude.dim(1);
  s.data.resize(magnitude.size());
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = std::polar(magnitude[i], phase[i]);
  return s;
}

std::vector<double> sqrt_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
  }
  return w;
}

Spectrogram stft(std::span<const double> x, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t frames = cfg.frames_for(x.size());
  const std::size_t bins = cfg.bins();
  const Plans& plans = plans_for(cfg.win);
  const std::vector<double> window = sqrt_hann(cfg.win);
  auto in = alloc_real(cfg.win);
  auto out = alloc_complex(bins);
  Spectrogram s;
  s.frames = frames;
  s.bins = bins;
  s.data.resize(frames * bins);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < cfg.win; ++i) in[i] = x[f * cfg.hop + i] * window[i];
    fftw_execute_dft_r2c(plans.forward, in.get(), out.get());
    for (std::size_t k = 0; k < bins; ++k) s.data[f * bins + k] = {out[k][0], out[k][1]};
  }
  return s;
}

std::vector<double> istft(const Spectrogram& spec, const StftConfig& cfg) {
  cfg.validate();
  if (spec.bins != cfg.bins()) {
    throw DimensionError("istft: spectrogram has " + std::to_string(spec.bins) + " bins, window implies " +
                         std::to_string(cfg.bins()));
  }
  if (spec.frames == 0 || spec.data.size() != spec.frames * spec.bins) {
    throw DimensionError("istft: spectrogram data does not match its extents");
  }
  const Plans& plans = plans_for(cfg.win);
  const std::vector<double> window = sqrt_hann(cfg.win);
  const std::size_t n = cfg.samples_for(spec.frames);
  std::vector<double> y(n, 0.0), norm(n, 0.0);
  auto in = alloc_complex(spec.bins);
  auto out = alloc_real(cfg.win);
  const double scale = 1.0 / static_cast<double>(cfg.win);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    for (std::size_t k = 0; k < spec.bins; ++k) {
      in[k][0] = spec.data[f * spec.bins + k].real();
      in[k][1] = spec.data[f * spec.bins + k].imag();
    }
    fftw_execute_dft_c2r(plans.inverse, in.get(), out.get());
    for (std::size_t i = 0; i < cfg.win; ++i) {
      y[f * cfg.hop + i] += out[i] * scale * window[i];
      norm[f * cfg.hop + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (norm[i] > 1e-10) y[i] /= norm[i];
  }
  return y;
}

std::pair<std::size_t, std::size_t> interior_range(std::size_t frames, const StftConfig& cfg) {
  return {cfg.hop, frames * cfg.hop};
}

Tensor power_law_compress(const Tensor& mag, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("power_law_compress: alpha must lie in (0, 1]");
  Tensor out(mag.shape());
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (mag[i] < 0.0) throw DomainError("power_law_compress: negative magnitude");
    out[i] = std::pow(mag[i], alpha);
  }
  return out;
}

}  // namespace bimamba
