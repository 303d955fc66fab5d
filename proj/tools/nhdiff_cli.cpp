#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "nhdiff/app/checks.hpp"
#include "nhdiff/app/commands.hpp"
#include "nhdiff/app/config.hpp"
#include "nhdiff/parallel.hpp"

using namespace nhdiff;

namespace {

// One JSON line per check on stdout; exit 3 if any fails.
int run_checks(const std::string& which, int threads) {
  std::vector<std::string> names;
  if (which == "all") {
    for (const auto& c : app::check_catalog()) names.push_back(c.name);
  } else {
    app::check_info(which);
    names.push_back(which);
  }
  bool ok = true;
  for (const auto& n : names) {
    const auto r = app::run_check(n, threads);
    std::cout << r.to_json() << std::endl;
    ok = ok && r.passed();
  }
  return ok ? 0 : app::kExitCheckFailure;
}

int run_config(const std::string& path, std::optional<std::uint64_t> seed, std::optional<int> threads,
               const std::string& out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const app::RunConfig cfg = app::load_config(ss.str(), seed);
  const int th = threads ? *threads : cfg.threads ? *cfg.threads : default_threads();
  const std::string dir = out.empty() ? cfg.output : out;
  const app::RunReport rep = app::run(cfg, th, dir);
  for (const auto& c : rep.checks)
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << c.value << " (tolerance " << c.tolerance << ")\n";
  std::cout << rep.command << ": " << rep.manifest.size() << " files in " << dir << ", config " << rep.config_hash
            << ", " << (rep.passed() ? "PASS" : "FAIL") << std::endl;
  return rep.passed() ? 0 : app::kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Nonholonomic diffusion toolkit: geometry checks, solutions, SDE and Fokker-Planck runs, ensembles."};
  std::string config, out, check;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool list = false;
  cli.add_option("--config", config, "JSON run configuration");
  cli.add_option("--seed", seed, "master seed (overrides the config)");
  cli.add_option("--threads", threads, "worker threads (default: NHDIFF_THREADS or 1)")->check(CLI::PositiveNumber);
  cli.add_option("--out", out, "output directory (overrides the config)");
  cli.add_option("--check", check, "run one acceptance check by name, or 'all'");
  cli.add_flag("--list-checks", list, "print the check names");
  CLI11_PARSE(cli, argc, argv);

  try {
    if (list) {
      for (const auto& c : app::check_catalog())
        std::cout << c.criterion << "\t" << c.name << "\t" << c.description << "\n";
      return 0;
    }
    if (!check.empty()) return run_checks(check, threads.value_or(default_threads()));
    if (config.empty()) {
      std::cerr << "nothing to do: pass --config or --check (see --help)\n";
      return app::kExitConfig;
    }
    return run_config(config, seed, threads, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return app::kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return app::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return app::kExitNumerical;
  }
}
