// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#pragma once

#include <cstddef>
#include <functional>

namespace bimamba {

// Worker cap: BIMAMBA_THREADS if set, else hardware concurrency.
std::size_t max_workers();

// Overrides the worker cap for the current thread while alive.
class ScopedWorkerLimit {
 public:
  explicit ScopedWorkerLimit(std::size_t limit);
  ~ScopedWorkerLimit();
  ScopedWorkerLimit(const ScopedWorkerLimit&) = delete;
  ScopedWorkerLimit& operator=(const ScopedWorkerLimit&) = delete;

 private:
  std::size_t previous_;
};

// Runs fn(i) for i in [0, n). Iterations must write disjoint outputs; the
// partition of work across threads never changes any arithmetic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace bimamba
