// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// Command dispatch shared by the C API and the CLI.
//
// Output directory layout (all optional artifacts are per command):
//   report.json      deterministic RunReport
//   timings.json     wall-clock data, never compared
//   grid.csv, grid.ppm, checkpoint/, train_log.jsonl, cost.csv

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bimamba/report.hpp"

namespace bimamba {

const std::vector<std::string>& command_names();
bool is_command(const std::string& name);

struct CommandRequest {
  std::string command;
  nlohmann::json config;  // null: defaults (a config is mandatory for paramcount)
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // empty: nothing is written
};

// Throws ConfigError for unknown commands, bad configs or a missing mandatory
// config, IoError for unreadable checkpoints. Check failures are reported in
// the returned RunReport, not thrown.
RunReport run_command(const CommandRequest& req);

// Writes report.json and timings.json under dir.
void write_report_files(const std::filesystem::path& dir, const RunReport& report);

}  // namespace bimamba
