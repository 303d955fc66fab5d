#pragma once

#include <string>
#include <utility>
#include <vector>

namespace nhdiff::app {

struct CheckInfo {
  std::string name;
  int criterion = 0;
  double budget_seconds = 0.0;
  std::string description;
};

// In criterion order.
const std::vector<CheckInfo>& check_catalog();
const CheckInfo& check_info(const std::string& name);  // ConfigError for unknown names

struct CheckResult {
  CheckInfo info;
  bool met = false;  // the numerical criterion
  double seconds = 0.0;
  std::string summary;
  std::vector<std::pair<std::string, double>> metrics;
  bool within_budget() const { return seconds < info.budget_seconds; }
  bool passed() const { return met && within_budget(); }
  std::string to_json() const;  // one line
};

// Runs one check. Module errors inside the check count as a failure.
CheckResult run_check(const std::string& name, int threads);

}  // namespace nhdiff::app
