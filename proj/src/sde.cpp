#include "nhdiff/sde.hpp"

#include <cmath>
#include <string>

#include "nhdiff/field.hpp"
#include "nhdiff/parallel.hpp"
#include "nhdiff/types.hpp"

namespace nhdiff::sde {

void WienerConfig::validate() const {
  if (!(rho >= 0.0)) throw ConfigError("wiener: rho must be non-negative");
  if (dim < 1 || dim > kMaxNoise) throw ConfigError("wiener: dim must be in [1, 8]");
  if (!(dt > 0.0)) throw ConfigError("wiener: dt must be positive");
  if (steps < 1) throw ConfigError("wiener: steps must be positive");
}

double wiener_increment(const WienerConfig& cfg, const rng::CounterRng& gen, std::uint64_t path,
                        std::uint64_t step, std::uint32_t component) {
  return std::sqrt(cfg.rho * cfg.dt) * gen.normal(path, step, component);
}

Eigen::MatrixXd sample_wiener(const WienerConfig& cfg, std::uint64_t path) {
  cfg.validate();
  const rng::CounterRng gen(cfg.seed);
  Eigen::MatrixXd dW(cfg.steps, cfg.dim);
  for (long n = 0; n < cfg.steps; ++n)
    for (int k = 0; k < cfg.dim; ++k) dW(n, k) = wiener_increment(cfg, gen, path, n, k);
  return dW;
}

void SDESystem::validate() const {
  if (state_dim < 1 || state_dim > kMaxState) throw ConfigError("sde: state_dim out of range");
  if (noise_dim < 1 || noise_dim > kMaxNoise) throw ConfigError("sde: noise_dim out of range");
  if (!sigma || !drift) throw ConfigError("sde: sigma and drift callbacks are required");
}

State noise_induced_drift(const SDESystem& sys, double rho, double tau, const State& u) {
  State c = State::Zero(sys.state_dim);
  const NoiseMatrix s = sys.sigma(tau, u);
  for (int b = 0; b < sys.state_dim; ++b) {
    State p = u, q = u;
    const double h = fd_step(u(b));
    p(b) += h;
    q(b) -= h;
    const NoiseMatrix ds = (sys.sigma(tau, p) - sys.sigma(tau, q)) / (p(b) - q(b));
    for (int k = 0; k < sys.noise_dim; ++k) c += s(b, k) * ds.col(k);
  }
  return 0.5 * rho * c;
}

SDESystem ito_equivalent(const SDESystem& sys, double rho) {
  if (sys.interpretation == Interpretation::Ito) return sys;
  SDESystem out = sys;
  out.interpretation = Interpretation::Ito;
  out.drift = [sys, rho](double tau, const State& u) -> State {
    return sys.drift(tau, u) + noise_induced_drift(sys, rho, tau, u);
  };
  return out;
}

SDESystem stratonovich_equivalent(const SDESystem& sys, double rho) {
  if (sys.interpretation == Interpretation::Stratonovich) return sys;
  SDESystem out = sys;
  out.interpretation = Interpretation::Stratonovich;
  out.drift = [sys, rho](double tau, const State& u) -> State {
    return sys.drift(tau, u) - noise_induced_drift(sys, rho, tau, u);
  };
  return out;
}

State euler_maruyama_step(const SDESystem& sys, double tau, const State& u, const Noise& dW, double dt) {
  return u + sys.sigma(tau, u) * dW + sys.drift(tau, u) * dt;
}

State heun_step(const SDESystem& sys, double tau, const State& u, const Noise& dW, double dt) {
  const NoiseMatrix s0 = sys.sigma(tau, u);
  const State b0 = sys.drift(tau, u);
  const State pred = u + s0 * dW + b0 * dt;
  const NoiseMatrix s1 = sys.sigma(tau + dt, pred);
  const State b1 = sys.drift(tau + dt, pred);
  return u + 0.5 * (s0 + s1) * dW + 0.5 * (b0 + b1) * dt;
}

namespace {

PathEnsemble run(const SDESystem& sys, const IntegrationOptions& opt, bool heun) {
  sys.validate();
  opt.wiener.validate();
  if (opt.wiener.dim != sys.noise_dim) throw ConfigError("wiener dim must equal the system noise dim");
  if (opt.u0.size() != sys.state_dim) throw ConfigError("initial state has the wrong dimension");
  if (opt.paths < 1) throw ConfigError("paths must be positive");
  PathEnsemble ens;
  ens.state_dim = sys.state_dim;
  ens.paths = opt.paths;
  ens.steps = opt.wiener.steps;
  ens.dt = opt.wiener.dt;
  ens.seed = opt.wiener.seed;
  ens.interpretation = sys.interpretation;
  ens.record_every = opt.record_every;
  ens.recorded_paths = opt.record_every > 0 ? std::min(opt.record_paths, opt.paths) : 0;
  ens.terminal.assign(opt.paths * sys.state_dim, 0.0);
  const long records = ens.records_per_path();
  ens.trajectories.assign(ens.recorded_paths * records * sys.state_dim, 0.0);
  const rng::CounterRng gen(opt.wiener.seed);
  const double dt = opt.wiener.dt;

  parallel_for(opt.paths, opt.threads, [&](long p) {
    const std::uint64_t id = static_cast<std::uint64_t>(opt.path_offset + p);
    State u = opt.u0;
    Noise dW(sys.noise_dim);
    const bool keep = p < ens.recorded_paths;
    auto record = [&](long n) {
      if (!keep || n % opt.record_every != 0) return;
      double* out = &ens.trajectories[(p * records + n / opt.record_every) * sys.state_dim];
      for (int c = 0; c < sys.state_dim; ++c) out[c] = u(c);
    };
    record(0);
    for (long n = 0; n < opt.wiener.steps; ++n) {
      for (int k = 0; k < sys.noise_dim; ++k) dW(k) = wiener_increment(opt.wiener, gen, id, n, k);
      const double tau = n * dt;
      u = heun ? heun_step(sys, tau, u, dW, dt) : euler_maruyama_step(sys, tau, u, dW, dt);
      if (opt.post_step) opt.post_step(n + 1, u);
      if (!u.allFinite())
        throw NumericalError("non-finite state on path " + std::to_string(id) + " at step " + std::to_string(n + 1));
      record(n + 1);
    }
    for (int c = 0; c < sys.state_dim; ++c) ens.terminal[p * sys.state_dim + c] = u(c);
  });
  return ens;
}

}  // namespace

PathEnsemble integrate_ito(const SDESystem& sys, const IntegrationOptions& opt) {
  if (sys.interpretation != Interpretation::Ito)
    throw ConfigError("integrate_ito needs an Ito system; convert with ito_equivalent");
  return run(sys, opt, false);
}

PathEnsemble integrate_stratonovich(const SDESystem& sys, const IntegrationOptions& opt) {
  if (sys.interpretation != Interpretation::Stratonovich)
    throw ConfigError("integrate_stratonovich needs a Stratonovich system");
  return run(sys, opt, true);
}

PathEnsemble integrate(const SDESystem& sys, const IntegrationOptions& opt) {
  return sys.interpretation == Interpretation::Ito ? integrate_ito(sys, opt) : integrate_stratonovich(sys, opt);
}

Estimate estimate_expectation(const PathEnsemble& ens, const std::function<double(const double*)>& f) {
  if (ens.paths < 2) throw ConfigError("an estimate needs at least two paths");
  // Welford, so a constant functional gives exactly (c, 0).
  double mean = 0.0, m2 = 0.0;
  for (long p = 0; p < ens.paths; ++p) {
    const double x = f(&ens.terminal[p * ens.state_dim]);
    const double d = x - mean;
    mean += d / (p + 1);
    m2 += d * (x - mean);
  }
  const double var = m2 / (ens.paths - 1);
  return {mean, std::sqrt(var / ens.paths)};
}

Estimate estimate_probability(const PathEnsemble& ens, const std::function<bool(const double*)>& region) {
  return estimate_expectation(ens, [&](const double* s) { return region(s) ? 1.0 : 0.0; });
}

}  // namespace nhdiff::sde
