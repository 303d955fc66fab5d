#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "nhdiff/rng.hpp"
#include "nhdiff/types.hpp"

namespace nhdiff::sde {

// Fixed-capacity vectors keep per-step arithmetic off the heap.
inline constexpr int kMaxState = 24;
inline constexpr int kMaxNoise = 8;
using State = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxState, 1>;
using Noise = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxNoise, 1>;
using NoiseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxState, kMaxNoise>;

// Wiener increments with <dW dW> = rho dt per component.
struct WienerConfig {
  double rho = 1.0;
  int dim = 1;
  std::uint64_t seed = 0;
  double dt = 0.01;
  long steps = 100;
  void validate() const;
};

// Increment for (path, step, component); identical regardless of call order.
double wiener_increment(const WienerConfig& cfg, const rng::CounterRng& gen, std::uint64_t path,
                        std::uint64_t step, std::uint32_t component);
// All increments of one path, row = step.
Eigen::MatrixXd sample_wiener(const WienerConfig& cfg, std::uint64_t path);

enum class Interpretation { Ito, Stratonovich };

// dU = sigma(tau, U) dW + drift(tau, U) dtau. For a Stratonovich system the
// drift is the Stratonovich drift.
struct SDESystem {
  int state_dim = 1;
  int noise_dim = 1;
  Interpretation interpretation = Interpretation::Ito;
  std::function<NoiseMatrix(double, const State&)> sigma;
  std::function<State(double, const State&)> drift;
  void validate() const;
};

// Drift correction (rho/2) sum_k sigma^b_k d_b sigma^a_k by central differences.
State noise_induced_drift(const SDESystem& sys, double rho, double tau, const State& u);
// Same dynamics rewritten in the other interpretation.
SDESystem ito_equivalent(const SDESystem& stratonovich_system, double rho);
SDESystem stratonovich_equivalent(const SDESystem& ito_system, double rho);

State euler_maruyama_step(const SDESystem& sys, double tau, const State& u, const Noise& dW, double dt);
// Predictor-corrector (Heun) step, consistent with the Stratonovich calculus.
State heun_step(const SDESystem& sys, double tau, const State& u, const Noise& dW, double dt);

struct IntegrationOptions {
  WienerConfig wiener;
  long paths = 1;
  long path_offset = 0;  // first path id, for splitting an ensemble
  State u0;
  int threads = 1;
  long record_every = 0;  // 0: terminal state only
  long record_paths = 0;  // number of leading paths whose trajectories are kept
  // Applied after each step (e.g. re-orthonormalization); may edit the state.
  std::function<void(long step, State& u)> post_step;
};

struct PathEnsemble {
  int state_dim = 0;
  long paths = 0;
  long steps = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  Interpretation interpretation = Interpretation::Ito;
  std::vector<double> terminal;  // paths x state_dim
  long record_every = 0;
  long recorded_paths = 0;
  std::vector<double> trajectories;  // recorded_paths x (records) x state_dim
  long records_per_path() const { return record_every > 0 ? steps / record_every + 1 : 0; }
  double terminal_at(long path, int comp) const { return terminal[path * state_dim + comp]; }
};

// Euler-Maruyama for Ito systems, Heun for Stratonovich systems.
PathEnsemble integrate(const SDESystem& sys, const IntegrationOptions& opt);
PathEnsemble integrate_ito(const SDESystem& sys, const IntegrationOptions& opt);
PathEnsemble integrate_stratonovich(const SDESystem& sys, const IntegrationOptions& opt);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(paths)
};
// Over the terminal states; needs at least two paths.
Estimate estimate_expectation(const PathEnsemble& ens, const std::function<double(const double* state)>& f);
Estimate estimate_probability(const PathEnsemble& ens, const std::function<bool(const double* state)>& region);

}  // namespace nhdiff::sde
