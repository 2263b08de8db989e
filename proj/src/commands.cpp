// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>

#include "bimamba/bench.hpp"
#include "bimamba/config.hpp"
#include "bimamba/error.hpp"
#include "bimamba/experiments.hpp"
#include "bimamba/parallel.hpp"
#include "bimamba/verify.hpp"

namespace bimamba {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Slope windows for the wall-clock fits; reported in timings only.
constexpr double kMhsaSlopeLo = 1.7, kMhsaSlopeHi = 2.3;
constexpr double kMambaSlopeLo = 0.8, kMambaSlopeHi = 1.3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

void prepare_out(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string loss_log(const std::string& tag, const std::vector<double>& loss) {
  std::string out;
  for (std::size_t i = 0; i < loss.size(); ++i) {
    json line = {{"step", i}, {"loss", loss[i]}};
    if (!tag.empty()) line["arm"] = tag;
    out += line.dump() + "\n";
  }
  return out;
}

RunReport cmd_gradcheck(ConfigReader& r, const CommandRequest& req) {
  const GradcheckConfig cfg = gradcheck_config_from_json(r);
  r.finish();
  return run_gradcheck(cfg, req.seed);
}

RunReport cmd_equiv(ConfigReader& r, const CommandRequest& req) {
  const EquivConfig cfg = equiv_config_from_json(r);
  r.finish();
  return run_equiv(cfg, req.seed);
}

RunReport cmd_paramcount(const json& config) {
  json model = config;
  model.erase("schema_version");
  const ModelSpec spec = model_spec_from_json(model);
  RunReport rep = run_paramcount(spec);
  rep.config = to_json(spec);
  return rep;
}

RunReport cmd_bench(ConfigReader& r, const CommandRequest& req) {
  const BenchConfig cfg = bench_config_from_json(r);
  r.finish();
  const CostReport cost = time_scaling(cfg.mixers, cfg.lengths, cfg.mamba, req.seed, cfg.options);

  RunReport rep;
  rep.config = cfg.to_json();
  // MACs are analytic and go into the deterministic report.
  std::map<std::string, std::map<std::size_t, std::uint64_t>> macs;
  json macs_json = json::object();
  for (const CostRow& row : cost.rows) {
    macs[row.mixer][row.L] = row.macs;
    macs_json[row.mixer][std::to_string(row.L)] = row.macs;
  }
  rep.metrics["macs"] = macs_json;
  if (macs.count("mhsa") && macs.count("mamba")) {
    json ratios = json::array();
    bool increasing = true;
    double prev = 0.0;
    for (std::size_t L : cfg.lengths) {
      const double ratio = static_cast<double>(macs["mhsa"][L]) / static_cast<double>(macs["mamba"][L]);
      ratios.push_back({{"L", L}, {"ratio", ratio}});
      if (ratio <= prev) increasing = false;
      prev = ratio;
    }
    rep.metrics["mhsa_over_mamba_macs"] = ratios;
    rep.check("macs_ratio_strictly_increasing", increasing);
  }

  json rows = json::array();
  for (const CostRow& row : cost.rows) {
    rows.push_back({{"mixer", row.mixer},
                    {"L", row.L},
                    {"macs", row.macs},
                    {"wall_ms", row.skipped ? json(nullptr) : json(row.wall_ms)},
                    {"iqr_ms", row.iqr_ms},
                    {"reps", row.reps},
                    {"threads", row.threads},
                    {"skipped", row.skipped},
                    {"note", row.note}});
  }
  json fits = json::object();
  json slope_checks = json::object();
  for (const MixerFit& f : cost.fits) {
    fits[f.mixer] = {{"slope", f.fit.slope}, {"intercept", f.fit.intercept}, {"r2", f.fit.r2}, {"points", f.fit.points}};
    if (f.mixer == "mhsa") slope_checks["mhsa_slope_in_range"] = f.fit.slope >= kMhsaSlopeLo && f.fit.slope <= kMhsaSlopeHi;
    if (f.mixer == "mamba") {
      slope_checks["mamba_slope_in_range"] = f.fit.slope >= kMambaSlopeLo && f.fit.slope <= kMambaSlopeHi;
    }
  }
  rep.timings["rows"] = rows;
  rep.timings["fits"] = fits;
  rep.timings["slope_checks"] = slope_checks;
  if (!req.out_dir.empty()) write_text(req.out_dir / "cost.csv", cost_report_csv(cost));
  return rep;
}

RunReport cmd_boundary(ConfigReader& r, const CommandRequest& req) {
  const BoundaryConfig cfg = boundary_config_from_json(r);
  r.finish();
  ModelParams params;
  const BoundaryResult res = run_boundary_experiment(cfg, req.seed, &params);
  RunReport rep = boundary_report(cfg, req.seed, res);
  if (!req.out_dir.empty()) {
    const Dataset2D ds = gen_dataset(cfg.kind, cfg.n, req.seed, 0.2, cfg.spiral_scale);
    write_text(req.out_dir / "grid.csv", grid_csv(res.grid));
    write_text(req.out_dir / "grid.ppm", grid_ppm(res.grid, &ds));
    write_text(req.out_dir / "train_log.jsonl", loss_log("", res.loss));
    Checkpoint ckpt{boundary_model_spec(cfg), std::move(params), {{"boundary", cfg.to_json()}, {"seed", req.seed}}};
    save_checkpoint(req.out_dir / "checkpoint", ckpt);
  }
  return rep;
}

RunReport cmd_denoise(ConfigReader& r, const CommandRequest& req) {
  std::size_t n_train = 512, n_test = 16;
  r.get("n_train", n_train);
  r.get("n_test", n_test);
  const DenoiseConfig cfg = denoise_config_from_json(r);
  r.finish();
  if (n_train == 0 || n_test == 0) throw ConfigError("denoise: n_train and n_test must be positive");
  const DenoiseResult res = run_denoise_experiment(cfg, n_train, n_test, req.seed);
  RunReport rep = denoise_report(cfg, n_train, n_test, req.seed, res);
  if (!req.out_dir.empty()) {
    std::string log;
    for (const ArmOutcome& a : res.arms) log += loss_log(std::string(mixer_kind_name(a.arm.mixer)), a.loss);
    write_text(req.out_dir / "train_log.jsonl", log);
  }
  return rep;
}

RunReport cmd_export_grid(ConfigReader& r, const CommandRequest& req) {
  std::string checkpoint;
  std::size_t grid = 0;
  double margin = -1.0;
  r.get("checkpoint", checkpoint);
  r.get("grid", grid);
  r.get("margin", margin);
  r.finish();
  fs::path dir = checkpoint;
  if (dir.empty()) {
    if (req.out_dir.empty()) throw ConfigError("export-grid: no checkpoint given and no --out directory");
    dir = req.out_dir / "checkpoint";
  }
  const Checkpoint ckpt = load_checkpoint(dir);
  if (!ckpt.extra.contains("boundary") || !ckpt.extra.contains("seed")) {
    throw IoError("export-grid: checkpoint lacks the boundary dataset description");
  }
  ConfigReader br(ckpt.extra.at("boundary"), "checkpoint.boundary");
  BoundaryConfig bcfg = boundary_config_from_json(br);
  const std::uint64_t data_seed = ckpt.extra.at("seed").get<std::uint64_t>();
  if (grid != 0) bcfg.grid = grid;
  if (margin >= 0.0) bcfg.margin = margin;
  bcfg.validate();

  const Dataset2D ds = gen_dataset(bcfg.kind, bcfg.n, data_seed, 0.2, bcfg.spiral_scale);
  const DecisionGrid g = decision_grid(ckpt.spec, ckpt.params, ds, bcfg.grid, bcfg.margin);

  RunReport rep;
  rep.config = {{"grid", bcfg.grid}, {"margin", bcfg.margin}};
  if (!checkpoint.empty()) rep.config["checkpoint"] = checkpoint;
  const auto positives = std::count(g.pred.begin(), g.pred.end(), 1);
  rep.metrics = {{"resolution", g.resolution},
                 {"x_range", {g.x_lo, g.x_hi}},
                 {"y_range", {g.y_lo, g.y_hi}},
                 {"positive_fraction", static_cast<double>(positives) / static_cast<double>(g.pred.size())},
                 {"data_seed", data_seed},
                 {"dataset", dataset_kind_name(bcfg.kind)}};
  if (!req.out_dir.empty()) {
    write_text(req.out_dir / "grid.csv", grid_csv(g));
    write_text(req.out_dir / "grid.ppm", grid_ppm(g, &ds));
  }
  return rep;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gradcheck", "equiv",      "bench",      "boundary",
                                              "denoise",   "paramcount", "export-grid"};
  return names;
}

bool is_command(const std::string& name) {
  const auto& n = command_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

RunReport run_command(const CommandRequest& req) {
  if (!is_command(req.command)) throw ConfigError("unknown command '" + req.command + "'");
  json config = req.config;
  if (config.is_null()) {
    if (req.command == "paramcount") throw ConfigError("paramcount requires a model config");
    config = {{"schema_version", kSchemaVersion}};
  }
  require_schema(config, req.command);
  prepare_out(req.out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  if (req.command == "paramcount") {
    rep = cmd_paramcount(config);
  } else {
    ConfigReader r(config, req.command);
    int version = 0;
    r.get("schema_version", version);
    if (req.command == "gradcheck") rep = cmd_gradcheck(r, req);
    else if (req.command == "equiv") rep = cmd_equiv(r, req);
    else if (req.command == "bench") rep = cmd_bench(r, req);
    else if (req.command == "boundary") rep = cmd_boundary(r, req);
    else if (req.command == "denoise") rep = cmd_denoise(r, req);
    else rep = cmd_export_grid(r, req);
  }
  const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - t0;
  rep.command = req.command;
  rep.seed = req.seed;
  rep.timings["wall_s"] = wall.count();
  rep.timings["workers"] = max_workers();
  if (!req.out_dir.empty()) write_report_files(req.out_dir, rep);
  return rep;
}

void write_report_files(const fs::path& dir, const RunReport& report) {
  prepare_out(dir);
  write_text(dir / "report.json", report.dump());
  json t = report.timings;
  t["command"] = report.command;
  write_text(dir / "timings.json", t.dump(2) + "\n");
}

}  // namespace bimamba
