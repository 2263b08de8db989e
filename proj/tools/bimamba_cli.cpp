// Copyright 2026 The BiMamba Authors. Apache 2.0 License.
//
// bimamba <command> [--config PATH] [--seed INT] [--out DIR] [--json]
//
// Exit codes: 0 all checks passed, 1 a check failed or the run broke,
// 2 usage or configuration error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bimamba_c.h"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  bool json = false;
};

struct CommandInfo {
  const char* name;
  const char* help;
};

const CommandInfo kCommands[] = {
    {"gradcheck", "finite-difference gradient suite over every op and layer"},
    {"equiv", "scan, LTI and reversal equivalence checks"},
    {"bench", "MACs and wall-clock scaling of sequence mixers"},
    {"boundary", "2-D decision-boundary study; writes grid.csv, grid.ppm, checkpoint/"},
    {"denoise", "toy spectral-mask denoiser at matched parameter budgets"},
    {"paramcount", "parameter ledger of a model config (requires --config)"},
    {"export-grid", "decision grid from a boundary checkpoint"},
};

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

// Report for runs that never reached the library, so --out always holds one.
void write_error_report(const Options& opt, const std::string& command, const std::string& message) {
  if (opt.out.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(opt.out, ec);
  nlohmann::json rep = {{"command", command},       {"seed", opt.seed},
                        {"config", nlohmann::json::object()}, {"metrics", nlohmann::json::object()},
                        {"failures", {message}},    {"passed", false}};
  std::ofstream(std::filesystem::path(opt.out) / "report.json") << rep.dump(2) << "\n";
}

void print_summary(const nlohmann::json& rep) {
  std::cout << rep["command"].get<std::string>() << " seed=" << rep["seed"] << ": "
            << (rep["passed"].get<bool>() ? "PASS" : "FAIL") << "\n";
  const auto& m = rep["metrics"];
  if (m.contains("param_count")) std::cout << "param_count " << m["param_count"] << "\n";
  if (m.contains("checks")) {
    for (const auto& [name, v] : m["checks"].items()) {
      const bool ok = v.is_boolean() ? v.get<bool>() : v.value("ok", false);
      std::cout << "  " << (ok ? "ok   " : "FAIL ") << name << "\n";
    }
  }
  if (m.contains("cases")) {
    for (const auto& [name, c] : m["cases"].items()) {
      std::cout << "  " << name << " max_rel_error " << c["max_rel_error"] << " over " << c["coordinates"] << "\n";
    }
  }
  for (const auto& key : {"test_accuracy", "train_accuracy", "positive_fraction", "input_snr_db"}) {
    if (m.contains(key)) std::cout << "  " << key << " " << m[key] << "\n";
  }
  if (m.contains("arms")) {
    for (const auto& a : m["arms"]) {
      std::cout << "  " << a["mixer"].get<std::string>() << " improvement_db " << a["improvement_db"] << "\n";
    }
  }
  for (const auto& f : rep["failures"]) std::cerr << "failure: " << f.get<std::string>() << "\n";
}

int run(const std::string& command, const Options& opt, const CLI::App& sub) {
  std::string config_text;
  const char* config = nullptr;
  if (!opt.config.empty()) {
    if (!read_file(opt.config, config_text)) {
      std::cerr << "error: cannot read config '" << opt.config << "'\n\n" << sub.help();
      write_error_report(opt, command, "cannot read config '" + opt.config + "'");
      return kExitUsage;
    }
    config = config_text.c_str();
  }

  char* report = nullptr;
  char* timings = nullptr;
  int passed = 0;
  const bm_status st = bm_run_command(command.c_str(), config, opt.seed, opt.out.empty() ? nullptr : opt.out.c_str(),
                                      &report, &timings, &passed);
  if (st != BM_OK) {
    const std::string message = bm_last_error();
    std::cerr << "error (" << bm_status_name(st) << "): " << message << "\n";
    write_error_report(opt, command, message);
    if (st == BM_ERR_CONFIG || st == BM_ERR_IO || st == BM_ERR_INVALID_ARGUMENT) {
      std::cerr << "\n" << sub.help();
      return kExitUsage;
    }
    return kExitFail;
  }
  const std::string report_text = report;
  bm_string_free(report);
  bm_string_free(timings);

  if (opt.json) {
    std::cout << report_text;
  } else {
    print_summary(nlohmann::json::parse(report_text));
  }
  return passed ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BiMamba verification, training and benchmarking"};
  app.name("bimamba");
  app.require_subcommand(1, 1);
  app.footer("BIMAMBA_THREADS caps the worker count.");

  Options opt;
  std::vector<CLI::App*> subs;
  for (const CommandInfo& c : kCommands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opt.config, "JSON config with schema_version");
    sub->add_option("--seed", opt.seed, "RNG seed, echoed in the report")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", opt.out, "output directory for report.json, timings.json and artifacts");
    sub->add_flag("--json", opt.json, "print the report as JSON on stdout");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  for (CLI::App* sub : subs) {
    if (sub->parsed()) return run(sub->get_name(), opt, *sub);
  }
  std::cerr << app.help();
  return kExitUsage;
}
