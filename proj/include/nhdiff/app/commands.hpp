#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nhdiff/app/config.hpp"
#include "nhdiff/io.hpp"

namespace nhdiff::app {

struct CheckLine {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct RunReport {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::vector<CheckLine> checks;
  std::vector<std::pair<std::string, double>> norms;
  std::vector<io::ManifestEntry> manifest;
  bool passed() const;
  // report.json content. Only wall_seconds varies between identical runs.
  std::string to_json() const;
};

inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitCheckFailure = 3;

// Runs the configured command, writes artifacts under out and report.json next to them.
// Module errors propagate (ConfigError, NumericalError).
RunReport run(const RunConfig& cfg, int threads, const std::filesystem::path& out);

}  // namespace nhdiff::app
