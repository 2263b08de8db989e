// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#include "bimamba/report.hpp"

namespace bimamba {

void RunReport::check(const std::string& name, bool ok, const std::string& detail) {
  metrics["checks"][name] = ok;
  if (!ok) fail(detail.empty() ? name : name + ": " + detail);
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config;
  j["metrics"] = metrics;
  j["passed"] = passed();
  j["failures"] = failures;
  return j;
}

std::string RunReport::dump() const { return to_json().dump(2) + "\n"; }

}  // namespace bimamba
