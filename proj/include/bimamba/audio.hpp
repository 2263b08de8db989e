// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// One-sided STFT front end with a periodic square-root Hann window. At
// hop = win/2 the squared window sums to one, so analysis followed by
// weighted overlap-add synthesis reconstructs every sample covered by two
// frames exactly.

#pragma once

#include <complex>
#include <span>
#include <utility>
#include <vector>

#include "bimamba/tensor.hpp"

namespace bimamba {

struct StftConfig {
  std::size_t win = 512;
  std::size_t hop = 256;

  std::size_t bins() const { return win / 2 + 1; }
  std::size_t frames_for(std::size_t samples) const;  // 1 + (samples - win) / hop
  std::size_t samples_for(std::size_t frames) const;  // (frames - 1) * hop + win
  void validate() const;
};

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> data;  // [frames, bins]

  Tensor magnitude() const;
  Tensor phase() const;
  static Spectrogram from_polar(const Tensor& magnitude, const Tensor& phase);
};

std::vector<double> sqrt_hann(std::size_t n);

// No centering or padding. Throws DomainError if x is shorter than a window.
Spectrogram stft(std::span<const double> x, const StftConfig& cfg = {});
// Weighted overlap-add; divides by the summed squared window where it exceeds 1e-10.
std::vector<double> istft(const Spectrogram& spec, const StftConfig& cfg = {});

// Half-open sample range covered by two frames: [hop, frames * hop).
std::pair<std::size_t, std::size_t> interior_range(std::size_t frames, const StftConfig& cfg = {});

// Elementwise mag^alpha. Throws DomainError for negative input or alpha outside (0, 1].
Tensor power_law_compress(const Tensor& mag, double alpha = 0.3);

}  // namespace bimamba
