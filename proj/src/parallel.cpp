// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace bimamba {
namespace {

thread_local std::size_t t_limit = 0;  // 0: no override

std::size_t env_workers() {
  static const std::size_t value = [] {
    std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BIMAMBA_THREADS")) {
      try {
        const long v = std::stol(env);
        if (v >= 1) return std::min<std::size_t>(static_cast<std::size_t>(v), 256);
      } catch (const std::exception&) {
      }
    }
    return hw;
  }();
  return value;
}

}  // namespace

std::size_t max_workers() { return t_limit ? std::min(t_limit, env_workers()) : env_workers(); }

ScopedWorkerLimit::ScopedWorkerLimit(std::size_t limit) : previous_(t_limit) { t_limit = std::max<std::size_t>(1, limit); }
ScopedWorkerLimit::~ScopedWorkerLimit() { t_limit = previous_; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(max_workers(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace bimamba
