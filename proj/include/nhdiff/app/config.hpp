#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nhdiff/ansatz.hpp"
#include "nhdiff/fokker_planck.hpp"
#include "nhdiff/geometry.hpp"
#include "nhdiff/sde.hpp"
#include "nhdiff/stochastic_metrics.hpp"

namespace nhdiff::app {

enum class Command { GeometryCheck, Solve, Simulate, FpEvolve, Ensemble };
std::string command_name(Command c);

struct Tolerances {
  double nil = 1e-12;          // geometry-check with expect_nil
  double cross_check = 1e-4;   // analytic vs finite-difference connection
  double nonmetricity = 1e-8;
  double residual = 1e-6;      // solve: max-norm of r2, r3, r4
  double psi = 1e-10;          // solve: psi stencil residual
  double constraint = 1e-10;   // simulate sr/gr: |eta v v + 1|
  double frame = 1e-6;         // simulate sr/gr: fiber Gram error at re-orthonormalization
  double mass = 1e-8;          // fp-evolve, periodic lattices
  double realization = 1e-4;   // ensemble acceptance
  double accept_fraction = 0.95;
};

struct GeometryConfig {
  std::vector<ChartPoint> points{{0.2, 0.4, 0.6, 0.8}};
  bool expect_nil = false;
};

struct SolveConfig {
  ansatz::Family family = ansatz::Family::A;
  ansatz::GeneratingData data;
  ansatz::Grid grid{{ansatz::Axis::span(0, 1, 16), ansatz::Axis::span(0, 1, 16), ansatz::Axis::span(0, 1, 16)}};
  ansatz::PsiStencil stencil = ansatz::PsiStencil::Compact9;
  ansatz::ResidualMode residual_mode = ansatz::ResidualMode::Analytic;
};

enum class Process { Sde, SpecialRelativistic, GeneralRelativistic };

struct SimulateConfig {
  Process process = Process::Sde;
  sde::Interpretation interpretation = sde::Interpretation::Ito;
  double rho = 1.0;
  double dt = 0.01;
  long steps = 100;
  long paths = 1000;
  long record_every = 0;
  long record_paths = 0;
  long reorthonormalize_every = 100;
  // Generic SDE: fields read the state as chart coordinates (state_dim <= 4).
  int state_dim = 1, noise_dim = 1;
  std::vector<ScalarField> drift;
  std::vector<std::vector<ScalarField>> sigma;  // state_dim rows, noise_dim columns
  std::vector<double> u0;
  // Relativistic processes.
  Vec4 x0 = Vec4::Zero();
  Eigen::Vector3d v0 = Eigen::Vector3d::Zero();
};

struct FpConfig {
  fp::Lattice lattice = fp::Lattice::box({0, 1}, {-4, -4}, {4, 4}, {32, 32});
  double rho = 1.0;
  double tau = 1.0;
  double dt = 0.0;  // 0: 0.9 of the stability bound
  std::array<ScalarField, 4> drift;  // N-adapted components A^alpha
  ChartPoint point{};                // initial point mass
  double gaussian_width = 0.0;       // > 0: Gaussian of this variance instead of a point mass
};

struct EnsembleConfig {
  ansatz::Family family = ansatz::Family::A;
  ansatz::GeneratingData data;
  ansatz::Grid grid{{ansatz::Axis::span(0, 1, 12), ansatz::Axis::span(0, 1, 12), ansatz::Axis::span(0, 1, 12)}};
  stochastic::RandomGeneratorConfig random;
  std::vector<stochastic::GridIndex> probes;
  double lc_tolerance = 1e-8;
  bool dump_realizations = false;
};

struct RunConfig {
  Command command = Command::GeometryCheck;
  std::uint64_t seed = 0;
  std::optional<int> threads;
  std::string output = "out";
  Tolerances tol;
  geometry::MetricSpec spec = geometry::MetricSpec::flat();
  bool cross_check = false;  // both derivative modes requested
  GeometryConfig geometry;
  SolveConfig solve;
  SimulateConfig simulate;
  FpConfig fp;
  EnsembleConfig ensemble;
  // Canonical JSON of the inputs that determine the results (no output or threads).
  std::string canonical;
  std::string hash;  // fnv1a64 of canonical
};

struct ConfigIssue {
  std::string field;  // JSON pointer style path, "" for the document
  int line = 0;       // 1-based for parse errors, 0 otherwise
  std::string message;
  std::string str() const;
};

struct ParseResult {
  std::optional<RunConfig> config;
  std::vector<ConfigIssue> errors;
};

// Validates the whole document and collects every error. A seed override
// replaces the document's seed before hashing.
ParseResult parse_config(const std::string& text, std::optional<std::uint64_t> seed_override = std::nullopt);
// Throws ConfigError listing every issue.
RunConfig load_config(const std::string& text, std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace nhdiff::app
