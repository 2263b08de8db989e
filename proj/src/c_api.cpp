// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba_c.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "bimamba/commands.hpp"
#include "bimamba/config.hpp"
#include "bimamba/error.hpp"
#include "bimamba/weights.hpp"

struct bm_tensor {
  bimamba::Tensor t;
};

struct bm_model {
  bimamba::ModelSpec spec;
  bimamba::ModelParams params;
};

namespace {

thread_local std::string t_last_error;

bm_status ok() {
  t_last_error.clear();
  return BM_OK;
}

bm_status fail(bm_status s, std::string msg) {
  t_last_error = std::move(msg);
  return s;
}

// Maps the active exception to a status. Order matters: all library errors
// derive from bimamba::Error.
bm_status translate() {
  try {
    throw;
  } catch (const bimamba::DimensionError& e) {
    return fail(BM_ERR_DIMENSION, e.what());
  } catch (const bimamba::DomainError& e) {
    return fail(BM_ERR_DOMAIN, e.what());
  } catch (const bimamba::ConfigError& e) {
    return fail(BM_ERR_CONFIG, e.what());
  } catch (const bimamba::StructuralError& e) {
    return fail(BM_ERR_STRUCTURAL, e.what());
  } catch (const bimamba::EvaluationError& e) {
    return fail(BM_ERR_EVALUATION, e.what());
  } catch (const bimamba::IoError& e) {
    return fail(BM_ERR_IO, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(BM_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(BM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(BM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(BM_ERR_INTERNAL, "unknown exception");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_json(const char* text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw bimamba::ConfigError(std::string(what) + ": " + e.what());
  }
}

bimamba::ModelSpec spec_from_text(const char* spec_json) {
  nlohmann::json j = parse_json(spec_json, "model config");
  bimamba::require_schema(j, "model");
  j.erase("schema_version");
  return bimamba::model_spec_from_json(j);
}

#define BM_REQUIRE(cond, msg) \
  if (!(cond)) return fail(BM_ERR_INVALID_ARGUMENT, msg)

}  // namespace

extern "C" {

const char* bm_version(void) { return "0.1.0"; }

const char* bm_status_name(bm_status status) {
  switch (status) {
    case BM_OK: return "ok";
    case BM_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case BM_ERR_DIMENSION: return "dimension";
    case BM_ERR_DOMAIN: return "domain";
    case BM_ERR_CONFIG: return "config";
    case BM_ERR_STRUCTURAL: return "structural";
    case BM_ERR_EVALUATION: return "evaluation";
    case BM_ERR_IO: return "io";
    case BM_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* bm_last_error(void) { return t_last_error.c_str(); }

void bm_string_free(char* s) { std::free(s); }

bm_status bm_tensor_create(const size_t* shape, size_t rank, const double* data, bm_tensor** out) {
  BM_REQUIRE(out, "out is null");
  BM_REQUIRE(shape || rank == 0, "shape is null");
  try {
    bimamba::Shape s(shape, shape + rank);
    bimamba::Tensor t(s);
    if (data) std::memcpy(t.data().data(), data, t.size() * sizeof(double));
    *out = new bm_tensor{std::move(t)};
    return ok();
  } catch (...) {
    return translate();
  }
}

void bm_tensor_free(bm_tensor* t) { delete t; }

bm_status bm_tensor_rank(const bm_tensor* t, size_t* rank) {
  BM_REQUIRE(t && rank, "null argument");
  *rank = t->t.rank();
  return ok();
}

bm_status bm_tensor_shape(const bm_tensor* t, size_t* shape, size_t capacity) {
  BM_REQUIRE(t && (shape || capacity == 0), "null argument");
  BM_REQUIRE(capacity >= t->t.rank(), "shape buffer too small");
  for (size_t i = 0; i < t->t.rank(); ++i) shape[i] = t->t.shape()[i];
  return ok();
}

bm_status bm_tensor_size(const bm_tensor* t, size_t* size) {
  BM_REQUIRE(t && size, "null argument");
  *size = t->t.size();
  return ok();
}

bm_status bm_tensor_copy_data(const bm_tensor* t, double* out, size_t capacity) {
  BM_REQUIRE(t && (out || t->t.size() == 0), "null argument");
  BM_REQUIRE(capacity >= t->t.size(), "data buffer too small");
  std::memcpy(out, t->t.data().data(), t->t.size() * sizeof(double));
  return ok();
}

bm_status bm_model_create(const char* spec_json, uint64_t seed, bm_model** out) {
  BM_REQUIRE(spec_json && out, "null argument");
  try {
    bimamba::ModelSpec spec = spec_from_text(spec_json);
    bimamba::ModelParams params = bimamba::init_model(spec, seed);
    *out = new bm_model{std::move(spec), std::move(params)};
    return ok();
  } catch (...) {
    return translate();
  }
}

bm_status bm_model_load(const char* dir, bm_model** out) {
  BM_REQUIRE(dir && out, "null argument");
  try {
    bimamba::Checkpoint c = bimamba::load_checkpoint(dir);
    *out = new bm_model{std::move(c.spec), std::move(c.params)};
    return ok();
  } catch (...) {
    return translate();
  }
}

bm_status bm_model_save(const bm_model* m, const char* dir) {
  BM_REQUIRE(m && dir, "null argument");
  try {
    bimamba::save_checkpoint(dir, bimamba::Checkpoint{m->spec, m->params, nlohmann::json::object()});
    return ok();
  } catch (...) {
    return translate();
  }
}

void bm_model_free(bm_model* m) { delete m; }

bm_status bm_model_param_count(const bm_model* m, size_t* count) {
  BM_REQUIRE(m && count, "null argument");
  try {
    *count = bimamba::count_parameters(m->params);
    return ok();
  } catch (...) {
    return translate();
  }
}

bm_status bm_model_ledger_count(const char* spec_json, size_t* count) {
  BM_REQUIRE(spec_json && count, "null argument");
  try {
    *count = bimamba::model_param_count(spec_from_text(spec_json));
    return ok();
  } catch (...) {
    return translate();
  }
}

bm_status bm_model_forward(const bm_model* m, const bm_tensor* x, bm_tensor** out) {
  BM_REQUIRE(m && x && out, "null argument");
  try {
    *out = new bm_tensor{bimamba::model_forward(x->t, m->params, m->spec)};
    return ok();
  } catch (...) {
    return translate();
  }
}

bm_status bm_run_command(const char* command, const char* config_json, uint64_t seed, const char* out_dir,
                         char** report_json, char** timings_json, int* passed) {
  BM_REQUIRE(command && report_json && passed, "null argument");
  try {
    bimamba::CommandRequest req;
    req.command = command;
    if (config_json) req.config = parse_json(config_json, "config");
    req.seed = seed;
    if (out_dir) req.out_dir = out_dir;
    const bimamba::RunReport rep = bimamba::run_command(req);
    const std::string report = rep.dump();
    const std::string timings = rep.timings.dump(2) + "\n";
    char* r = dup_string(report);
    char* t = nullptr;
    if (timings_json) {
      try {
        t = dup_string(timings);
      } catch (...) {
        std::free(r);
        throw;
      }
      *timings_json = t;
    }
    *report_json = r;
    *passed = rep.passed() ? 1 : 0;
    return ok();
  } catch (...) {
    return translate();
  }
}

}  // extern "C"
