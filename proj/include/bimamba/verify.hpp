// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Self-checks exposed through the command line: scan equivalences, the
// finite-difference gradient suite, and parameter ledgers.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bimamba/blocks.hpp"
#include "bimamba/gradcheck.hpp"
#include "bimamba/report.hpp"
#include "bimamba/ssm.hpp"

namespace bimamba {

// Random scan instance with delta in [0.01, 0.5], A in [-2, -0.05], the rest in [-1, 1].
ssm::SsmInputs random_scan_instance(std::size_t batch, std::size_t steps, std::size_t channels, std::size_t state,
                                    std::mt19937_64& rng);

struct EquivConfig {
  std::size_t scan_instances = 100;
  std::vector<std::size_t> lengths{1, 2, 3, 16, 257, 1024};
  std::vector<std::size_t> widths{1, 4, 16};  // E and N are drawn from this set
  std::vector<std::size_t> chunks{1, 2, 7, 64};  // L itself is always added
  double scan_tol = 1e-10;
  std::size_t lti_instances = 50;
  double lti_tol = 1e-8;
  std::size_t reversal_instances = 50;
  double reversal_tol = 1e-10;

  void validate() const;
  nlohmann::json to_json() const;
};

RunReport run_equiv(const EquivConfig& cfg, std::uint64_t seed);

struct GradcheckConfig {
  double eps = 1e-4;
  std::size_t coordinates = 200;
  double tol = 1e-5;

  void validate() const;
  nlohmann::json to_json() const;
};

struct GradCase {
  std::string name;
  LossBuilder build;
  std::vector<Tensor> params;
};

// One scalar loss per differentiable primitive (and mode), plus the
// unidirectional and both bidirectional layers.
std::vector<GradCase> gradient_cases(std::uint64_t seed);

// One case per differentiable primitive (and mode), plus the unidirectional
// and both bidirectional layers.
RunReport run_gradcheck(const GradcheckConfig& cfg, std::uint64_t seed);

// Ledger of a model spec and of the three Mamba variants at its Mamba config.
RunReport run_paramcount(const ModelSpec& spec);

}  // namespace bimamba
