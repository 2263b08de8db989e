// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace bimamba {

// Result of one command or experiment. Everything except `timings` is a pure
// function of (command, config, seed); wall-clock data lives in `timings` so
// reports can be compared byte for byte.
struct RunReport {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();
  std::vector<std::string> failures;

  bool passed() const { return failures.empty(); }
  void fail(std::string why) { failures.push_back(std::move(why)); }
  // Records a named boolean check; a false value is also a failure.
  void check(const std::string& name, bool ok, const std::string& detail = "");

  // Deterministic document: no timings.
  nlohmann::json to_json() const;
  std::string dump() const;  // to_json() with 2-space indent and trailing newline
};

}  // namespace bimamba
