#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nhdiff/ansatz.hpp"
#include "nhdiff/field.hpp"

namespace nhdiff::stochastic {

enum class TildeKind {
  HDiffusion,    // random Fourier profile evolved by the h-diffusion equation, tau = t - t0
  RandomSource,  // correlated Gaussian field over x, plus a random part of upsilon2
  Brownian,      // W(t - t0), shared by all x columns (vacuum family only)
  Custom,        // caller-supplied field per realization
};

struct HDiffusionSource {
  double rho = 1.0;
  // Conformal factor g_ij = e^psi delta_ij of the h-block. Must be constant:
  // the profile is then evolved in closed form at rate e^{-psi}.
  ScalarField psi = ScalarField::constant(0.0);
  int modes = 2;  // wave numbers 0..modes-1 per axis, the zero mode excluded
  double amplitude = 1.0;
  // Period of the profile on each x axis; 0 uses the extent of the grid axis.
  std::array<double, 2> period{0.0, 0.0};
  // A positive width replaces the random modes by a deterministic Gaussian bump
  // exp(-|x - c|^2 / 2 width) on the plane.
  double bump_width = 0.0;
  std::array<double, 2> bump_center{0.0, 0.0};
};

struct RandomSourceSpec {
  double upsilon2_amplitude = 0.0;
  double correlation_length = 0.5;
  int features = 64;  // random Fourier features per field
};

struct RandomGeneratorConfig {
  double varpi = 0.0;
  TildeKind kind = TildeKind::HDiffusion;
  HDiffusionSource heat;
  RandomSourceSpec source;
  std::function<ScalarField(long realization)> custom;
  long realizations = 1;
  std::uint64_t seed = 0;
  void validate() const;
};

// The random part for one realization. Brownian kind has no field form; see brownian_tilde.
ScalarField tilde_field(const RandomGeneratorConfig& cfg, const ansatz::Grid& grid, long realization);
// Random part of upsilon2 on the random-source branch (zero otherwise).
ScalarField upsilon2_noise(const RandomGeneratorConfig& cfg, long realization);
// phi + varpi phi~. varpi = 0 returns phi itself.
ScalarField random_generating_function(const RandomGeneratorConfig& cfg, const ScalarField& phi,
                                       const ansatz::Grid& grid, long realization);
// W(t_k - t0) on the t axis with <dW dW> = rho dt.
std::vector<double> brownian_tilde(const RandomGeneratorConfig& cfg, const ansatz::Axis& t, long realization);

// Cumulative sum over t of (h_k + h_{k+1}) / 2 dt per x column, zero at the first slice.
ansatz::GridField stratonovich_metric_integral(const ansatz::GridField& h3, const ansatz::Grid& grid);
// sum_m f[2m + 1] (x[2m + 2] - x[2m]): the integrand is sampled at the
// midpoints of the integrator's steps. Both have 2n + 1 samples.
double midpoint_sum(const std::vector<double>& f, const std::vector<double>& x);

struct StratonovichIdentityReport {
  std::vector<int> steps;       // per level
  std::vector<double> rms;      // RMS of midpoint_sum(W, W) - W(T)^2 / 2
  std::vector<double> expected; // sqrt(T dt) / 2
  double order = 0.0;           // least-squares order in dt
  double order_stderr = 0.0;    // from batches of paths
};
// Midpoint sums of int W o dW on [0, T] from one fine path per sample, with
// coarse levels taken as nested subsamples.
StratonovichIdentityReport stratonovich_identity(long paths, int coarse_steps, int levels, double T,
                                                 std::uint64_t seed, int threads = 1);

struct GridIndex {
  int i = 0, j = 0, k = 0;
};

enum class Coefficient { H3, H4, W1, W2, N1, N2 };
inline constexpr int kCoefficients = 6;

struct LcSummary {
  bool pass = false;
  double max_torsion = 0.0, max_w_curl = 0.0, max_n_t = 0.0, max_n_curl = 0.0;
  std::string dominant;  // name of the largest violation
};

struct Realization {
  long index = 0;
  bool built = false;  // the generator produced a solution
  bool accepted = false;
  std::string reason;  // why it was rejected
  double residual = 0.0;  // max-norm of r2, r3, r4
  double r2 = 0.0, r3 = 0.0, r4 = 0.0;
  LcSummary lc;
  std::optional<ansatz::AnsatzSolution> solution;  // coefficients only, companions dropped
  // probes[c][q]: coefficient c at the ensemble's probe point q
  std::array<std::vector<double>, kCoefficients> probes;
};

struct MetricEnsemble {
  ansatz::Family family = ansatz::Family::A;
  ansatz::Grid grid;
  RandomGeneratorConfig config;
  double tolerance = 1e-4;
  std::vector<GridIndex> probes;
  std::vector<Realization> realizations;
  long accepted() const;
};

struct EnsembleOptions {
  ansatz::GenerateOptions generate;
  ansatz::ResidualMode mode = ansatz::ResidualMode::Analytic;
  double tolerance = 1e-4;
  double lc_tolerance = 1e-8;
  int threads = 1;
  bool keep_solutions = true;
  std::vector<GridIndex> probes;  // recorded for every realization
};

// Builds one solution per realization with the family generator. Families:
// A randomizes phi (and upsilon2 on the source branch); vacuum adds varpi phi~
// or varpi W to h3; constphi randomizes f; h3const adds varpi phi~(x, t0) to the initial h4.
MetricEnsemble generate_ensemble(ansatz::Family family, const ansatz::GeneratingData& base,
                                 const RandomGeneratorConfig& cfg, const ansatz::Grid& grid,
                                 const EnsembleOptions& opt = {});

Coefficient coefficient_from_name(const std::string& name);
const ansatz::GridField& coefficient(const ansatz::AnsatzSolution& s, Coefficient c);

struct EnsembleStatistics {
  long realizations = 0;
  std::vector<double> mean, mean_stderr;
  Eigen::MatrixXd covariance;  // k(p, q), Bessel-corrected
};
// Over accepted realizations, in index order. Points must be probe points
// unless the solutions were kept.
EnsembleStatistics ensemble_statistics(const MetricEnsemble& ens, Coefficient c, const std::vector<GridIndex>& points);

struct LcEntry {
  long index = 0;
  bool compatible = false;
  std::string dominant;
  double max_violation = 0.0;
};
std::vector<LcEntry> lc_transition_report(const MetricEnsemble& ens);

}  // namespace nhdiff::stochastic
