// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/config.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "bimamba/error.hpp"
#include "bimamba/tensor_io.hpp"
#include "bimamba/weights.hpp"

namespace bimamba {

using nlohmann::json;
namespace fs = std::filesystem;

ConfigReader::ConfigReader(const json& j, std::string context) : json_(j), context_(std::move(context)) {
  if (!json_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
}

json ConfigReader::object(const char* key) {
  const auto it = json_.find(key);
  if (it == json_.end()) return json::object();
  seen_.emplace_back(key);
  if (!it->is_object()) throw ConfigError(context_ + "." + key + ": expected an object");
  return *it;
}

void ConfigReader::finish() const {
  for (const auto& [key, value] : json_.items()) {
    if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
      throw ConfigError(context_ + ": unknown key '" + key + "'");
    }
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
}

void require_schema(const json& j, const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  const auto it = j.find("schema_version");
  if (it == j.end()) throw ConfigError(context + ": missing schema_version");
  if (!it->is_number_integer() || it->get<int>() != kSchemaVersion) {
    throw ConfigError(context + ": unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  }
}

// ---- model spec ------------------------------------------------------------

json to_json(const ModelSpec& spec) {
  const BlockSpec& b = spec.block;
  const MambaConfig& m = spec.mamba;
  return {{"block",
           {{"kind", block_kind_name(b.kind)},
            {"mixer", mixer_kind_name(b.mixer)},
            {"causal", b.causal},
            {"d_model", b.d_model},
            {"n_heads", b.n_heads},
            {"d_ff", b.d_ff},
            {"conv_kernel", b.conv_kernel},
            {"use_macaron", b.use_macaron},
            {"use_swish", b.use_swish},
            {"use_pe", b.use_pe},
            {"dropout_p", b.dropout_p},
            {"norm_eps", b.norm_eps}}},
          {"mamba",
           {{"expand", m.expand},
            {"d_state", m.d_state},
            {"d_conv", m.d_conv},
            {"dt_ratio", m.dt_ratio},
            {"a_init", a_init_name(m.a_init)},
            {"a_noise_sigma", m.a_noise_sigma},
            {"scan_chunk", m.scan_chunk},
            {"norm_eps", m.norm_eps}}},
          {"depth", spec.depth},
          {"d_in", spec.d_in},
          {"d_out", spec.d_out},
          {"pool_mean", spec.pool_mean}};
}

namespace {

void read_block(const json& j, BlockSpec& b) {
  ConfigReader r(j, "model.block");
  std::string kind(block_kind_name(b.kind)), mixer(mixer_kind_name(b.mixer));
  r.get("kind", kind);
  r.get("mixer", mixer);
  b.kind = parse_block_kind(kind);
  b.mixer = parse_mixer_kind(mixer);
  r.get("causal", b.causal);
  r.get("d_model", b.d_model);
  r.get("n_heads", b.n_heads);
  r.get("d_ff", b.d_ff);
  r.get("conv_kernel", b.conv_kernel);
  r.get("use_macaron", b.use_macaron);
  r.get("use_swish", b.use_swish);
  r.get("use_pe", b.use_pe);
  r.get("dropout_p", b.dropout_p);
  r.get("norm_eps", b.norm_eps);
  r.finish();
}

void read_mamba(const json& j, MambaConfig& m) {
  ConfigReader r(j, "model.mamba");
  std::string a_init(a_init_name(m.a_init));
  r.get("expand", m.expand);
  r.get("d_state", m.d_state);
  r.get("d_conv", m.d_conv);
  r.get("dt_ratio", m.dt_ratio);
  r.get("a_init", a_init);
  m.a_init = parse_a_init(a_init);
  r.get("a_noise_sigma", m.a_noise_sigma);
  r.get("scan_chunk", m.scan_chunk);
  r.get("norm_eps", m.norm_eps);
  r.finish();
}

}  // namespace

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  ConfigReader r(j, "model");
  read_block(r.object("block"), spec.block);
  read_mamba(r.object("mamba"), spec.mamba);
  spec.mamba.d_model = spec.block.d_model;
  r.get("depth", spec.depth);
  r.get("d_in", spec.d_in);
  r.get("d_out", spec.d_out);
  r.get("pool_mean", spec.pool_mean);
  r.finish();
  spec.validate();
  return spec;
}

// ---- command configs -------------------------------------------------------

BoundaryConfig boundary_config_from_json(ConfigReader& r) {
  BoundaryConfig c;
  std::string dataset = dataset_kind_name(c.kind);
  r.get("dataset", dataset);
  c.kind = parse_dataset_kind(dataset);
  r.get("with_ffn", c.with_ffn);
  r.get("n", c.n);
  r.get("epochs", c.epochs);
  r.get("lr", c.lr);
  r.get("grid", c.grid);
  r.get("margin", c.margin);
  r.get("spiral_scale", c.spiral_scale);
  r.get("d_model", c.d_model);
  r.get("d_state", c.d_state);
  r.get("d_ff", c.d_ff);
  c.validate();
  return c;
}

DenoiseConfig denoise_config_from_json(ConfigReader& r) {
  DenoiseConfig c;
  std::vector<std::string> mixers;
  for (MixerKind m : c.mixers) mixers.emplace_back(mixer_kind_name(m));
  r.get("mixers", mixers);
  c.mixers.clear();
  for (const std::string& m : mixers) c.mixers.push_back(parse_mixer_kind(m));
  r.get("d_model", c.d_model);
  r.get("n_heads", c.n_heads);
  r.get("d_state", c.d_state);
  r.get("reference_d_ff", c.reference_d_ff);
  r.get("max_depth", c.max_depth);
  r.get("budget_tolerance", c.budget_tolerance);
  r.get("steps", c.steps);
  r.get("batch", c.batch);
  r.get("warmup_steps", c.warmup_steps);
  r.get("lr_scale", c.lr_scale);
  r.get("alpha", c.alpha);
  r.get("dur_s", c.dur_s);
  r.get("train_snr_lo", c.train_snr_lo);
  r.get("train_snr_hi", c.train_snr_hi);
  r.get("test_snr", c.test_snr);
  c.validate();
  return c;
}

EquivConfig equiv_config_from_json(ConfigReader& r) {
  EquivConfig c;
  r.get("scan_instances", c.scan_instances);
  r.get("lengths", c.lengths);
  r.get("widths", c.widths);
  r.get("chunks", c.chunks);
  r.get("scan_tol", c.scan_tol);
  r.get("lti_instances", c.lti_instances);
  r.get("lti_tol", c.lti_tol);
  r.get("reversal_instances", c.reversal_instances);
  r.get("reversal_tol", c.reversal_tol);
  c.validate();
  return c;
}

GradcheckConfig gradcheck_config_from_json(ConfigReader& r) {
  GradcheckConfig c;
  r.get("eps", c.eps);
  r.get("coordinates", c.coordinates);
  r.get("tol", c.tol);
  c.validate();
  return c;
}

json BenchConfig::to_json() const {
  return {{"mixers", mixers},
          {"lengths", lengths},
          {"d_model", mamba.d_model},
          {"d_state", mamba.d_state},
          {"expand", mamba.expand},
          {"n_heads", options.n_heads},
          {"reps", options.reps},
          {"warmups", options.warmups},
          {"batch", options.batch},
          {"parallel_row", options.parallel_row},
          {"parallel_chunk", options.parallel_chunk}};
}

BenchConfig bench_config_from_json(ConfigReader& r) {
  BenchConfig c;
  r.get("mixers", c.mixers);
  r.get("lengths", c.lengths);
  r.get("d_model", c.mamba.d_model);
  r.get("d_state", c.mamba.d_state);
  r.get("expand", c.mamba.expand);
  r.get("n_heads", c.options.n_heads);
  r.get("reps", c.options.reps);
  r.get("warmups", c.options.warmups);
  r.get("batch", c.options.batch);
  r.get("parallel_row", c.options.parallel_row);
  r.get("parallel_chunk", c.options.parallel_chunk);
  c.mamba.validate();
  return c;
}

// ---- checkpoints -----------------------------------------------------------

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  json tensors = json::array();
  std::size_t i = 0;
  for (const NamedTensor& nt : named_tensors(ckpt.params)) {
    std::ostringstream file;
    file << "t" << std::setw(4) << std::setfill('0') << i++ << ".bin";
    save_tensor(dir / file.str(), nt.value);
    tensors.push_back({{"name", nt.name}, {"file", file.str()}, {"shape", nt.value.shape()}});
  }
  json manifest = {{"schema_version", kSchemaVersion}, {"model", to_json(ckpt.spec)}, {"tensors", tensors},
                   {"extra", ckpt.extra}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("missing checkpoint manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("checkpoint manifest: " + std::string(e.what()));
  }
  require_schema(manifest, "checkpoint");
  Checkpoint ckpt;
  ckpt.spec = model_spec_from_json(manifest.at("model"));
  ckpt.extra = manifest.value("extra", json::object());
  ckpt.params = init_model(ckpt.spec, 0);
  const json& tensors = manifest.at("tensors");
  std::size_t i = 0;
  bool mismatch = false;
  visit_weights(ckpt.params, [&](const std::string& name, Tensor& t) {
    if (i >= tensors.size() || tensors[i].at("name") != name) {
      mismatch = true;
      return;
    }
    Tensor loaded = load_tensor(dir / tensors[i].at("file").get<std::string>());
    if (loaded.shape() != t.shape()) mismatch = true;
    t = std::move(loaded);
    ++i;
  });
  if (mismatch || i != tensors.size()) throw IoError("checkpoint tensors do not match the model spec");
  return ckpt;
}

}  // namespace bimamba
