// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// JSON configuration and checkpoints. Every config document carries
// "schema_version"; keys a reader does not consume are errors.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bimamba/bench.hpp"
#include "bimamba/blocks.hpp"
#include "bimamba/error.hpp"
#include "bimamba/experiments.hpp"
#include "bimamba/verify.hpp"

namespace bimamba {

constexpr int kSchemaVersion = 1;

// Reads optional keys from one JSON object and remembers which were seen.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::string context);

  template <class T>
  void get(const char* key, T& out) {
    const auto it = json_.find(key);
    if (it == json_.end()) return;
    seen_.emplace_back(key);
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }
  // Sub-object, or an empty object when absent.
  nlohmann::json object(const char* key);
  // Throws ConfigError naming the first key that was never read.
  void finish() const;

 private:
  const nlohmann::json& json_;
  std::string context_;
  std::vector<std::string> seen_;
};

nlohmann::json read_json_file(const std::filesystem::path& path);
// Throws ConfigError unless j is an object whose schema_version equals kSchemaVersion.
void require_schema(const nlohmann::json& j, const std::string& context);

nlohmann::json to_json(const ModelSpec& spec);
// Fields absent from j keep their defaults; mamba.d_model follows block.d_model.
ModelSpec model_spec_from_json(const nlohmann::json& j);

BoundaryConfig boundary_config_from_json(ConfigReader& r);
DenoiseConfig denoise_config_from_json(ConfigReader& r);
EquivConfig equiv_config_from_json(ConfigReader& r);
GradcheckConfig gradcheck_config_from_json(ConfigReader& r);

struct BenchConfig {
  std::vector<std::string> mixers{"mhsa", "mamba"};
  std::vector<std::size_t> lengths{1024, 2048, 4096, 8192, 16384};
  MambaConfig mamba;
  ScalingOptions options;

  nlohmann::json to_json() const;
};
BenchConfig bench_config_from_json(ConfigReader& r);

struct Checkpoint {
  ModelSpec spec;
  ModelParams params;
  nlohmann::json extra = nlohmann::json::object();
};

// Directory with manifest.json and one binary file per tensor.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
// Throws IoError on missing files or a manifest that disagrees with the spec.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace bimamba
