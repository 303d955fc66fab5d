#include "nhdiff/app/checks.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "nhdiff/ansatz.hpp"
#include "nhdiff/fokker_planck.hpp"
#include "nhdiff/geometry.hpp"
#include "nhdiff/oracles.hpp"
#include "nhdiff/parallel.hpp"
#include "nhdiff/relativistic.hpp"
#include "nhdiff/sde.hpp"
#include "nhdiff/stats.hpp"
#include "nhdiff/stochastic_metrics.hpp"

namespace nhdiff::app {

namespace {

constexpr double kPi = std::numbers::pi;

using geometry::DerivativeMode;
using geometry::MetricSpec;

struct Outcome {
  bool met = false;
  std::string summary;
  std::vector<std::pair<std::string, double>> metrics;
  void metric(const std::string& k, double v) { metrics.emplace_back(k, v); }
};

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------- shared data

ansatz::Grid cube(int n) {
  using ansatz::Axis;
  return {{Axis::span(0, 1, n), Axis::span(0, 1, n), Axis::span(0, 1, n)}};
}

// phi = t + 0.1 sin x1 sin x2, upsilon2 = 1, upsilon4 = 0.
ansatz::GeneratingData family_a_data() {
  ansatz::GeneratingData g;
  g.phi = sum({polynomial({{1.0, {0, 0, 1, 0}}}), product({trigonometric(TrigKind::Sin, 0.1, {1, 0, 0, 0}, 0, 0),
                                                           trigonometric(TrigKind::Sin, 1.0, {0, 1, 0, 0}, 0, 0)})});
  g.upsilon2 = ScalarField::constant(1.0);
  g.upsilon4 = ScalarField::constant(0.0);
  g.h4_0 = ScalarField::constant(20.0);
  g.n1 = {polynomial({{1.0, {0, 1, 0, 0}}}), polynomial({{1.0, {1, 0, 0, 0}}})};
  g.n2 = {ScalarField::constant(0.5), trigonometric(TrigKind::Cos, 0.3, {1, 1, 0, 0}, 0, 0)};
  return g;
}

Eigen::VectorXd random_field(std::size_t n, unsigned seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::VectorXd v(static_cast<long>(n));
  for (auto& x : v) x = d(g);
  return v;
}

sde::SDESystem system2(std::function<Eigen::Matrix2d(double, double)> sig,
                       std::function<Eigen::Vector2d(double, double)> drift) {
  sde::SDESystem s;
  s.state_dim = 2;
  s.noise_dim = 2;
  s.sigma = [sig](double, const sde::State& u) { return sde::NoiseMatrix(sig(u(0), u(1))); };
  s.drift = [drift](double, const sde::State& u) { return sde::State(drift(u(0), u(1))); };
  return s;
}

Eigen::Matrix2d varying_sigma(double x, double y) {
  return Eigen::Matrix2d{{1 + 0.3 * std::sin(kPi * x / 4), 0.2 * std::cos(kPi * y / 4)}, {0.0, 1.2}};
}

Eigen::Vector2d varying_drift(double x, double y) {
  return Eigen::Vector2d(0.5 * std::cos(kPi * y / 4), -0.3 * std::sin(kPi * x / 4));
}

sde::SDESystem gbm() {
  sde::SDESystem s;
  s.interpretation = sde::Interpretation::Stratonovich;
  s.sigma = [](double, const sde::State& u) { return sde::NoiseMatrix(u); };
  s.drift = [](double, const sde::State& u) -> sde::State { return sde::State::Zero(u.size()); };
  return s;
}

// Curved h-block over x and curved v-block over y with N = 0.
MetricSpec product_spec() {
  MetricSpec s;
  s.g2 = exponential(1.0, {0.5, 0, 0, 0}, 0.0);
  s.h3 = polynomial({{-1.0, {0, 0, 0, 0}}, {-0.3, {0, 0, 2, 0}}});
  s.h4 = exponential(1.0, {0, 0, 0, 0.4}, 0.0);
  return s;
}

// Coefficients bounded away from zero, so heated paths cannot reach a degenerate metric.
MetricSpec bounded_spec() {
  MetricSpec s;
  s.g2 = trigonometric(TrigKind::Sin, 0.2, {1, 0, 0, 0}, 0, 1.0);
  s.h3 = trigonometric(TrigKind::Cos, -0.2, {0, 0, 1, 0}, 0, -1.0);
  s.h4 = trigonometric(TrigKind::Sin, 0.2, {0, 0, 0, 1}, 0, 1.0);
  return s;
}

// g_ij = exp(0.3 sin(pi x1 / 4) + 0.2 cos(pi x2 / 4)) delta_ij, periodic on [-4, 4)^2.
MetricSpec conformal_spec() {
  const ScalarField psi = sum({trigonometric(TrigKind::Sin, 0.3, {kPi / 4, 0, 0, 0}, 0, 0),
                               trigonometric(TrigKind::Cos, 0.2, {0, kPi / 4, 0, 0}, 0, 0)});
  MetricSpec spec = MetricSpec::flat();
  const ScalarField g = ScalarField::from_jet([psi](const ChartPoint& u) {
    const Jet p = psi.jet(u);
    const double e = std::exp(p.v);
    return compose(p, e, e, e);
  });
  spec.g1 = g;
  spec.g2 = g;
  return spec;
}

relativistic::RelativisticState rest_state(Vec4 u = Vec4::Zero(), Eigen::Vector3d v = Eigen::Vector3d::Zero()) {
  relativistic::RelativisticState s;
  s.u = u;
  s.v_hat = v;
  s.E = relativistic::fiber_frame(v);
  return s;
}

relativistic::RelativisticOptions rel_options(double rho, double dt, long steps, long paths, int threads) {
  relativistic::RelativisticOptions o;
  o.wiener = {rho, 3, 7, dt, steps};
  o.paths = paths;
  o.threads = threads;
  return o;
}

// ---------------------------------------------------------------- 1-3 geometry

Outcome flat_nil(int) {
  Outcome o;
  const MetricSpec spec = MetricSpec::flat();
  double worst = 0.0;
  for (const ChartPoint& u : {ChartPoint{0.2, 0.4, 0.6, 0.8}, ChartPoint{-3.0, 1.5, 7.0, -2.0}, ChartPoint{0, 0, 0, 0}}) {
    const auto s = geometry::sample(spec, u);
    worst = std::max({worst, max_abs(geometry::canonical_dconnection(s)), max_abs(geometry::torsion(s)),
                      max_abs(geometry::anholonomy(s)), max_abs(geometry::distortion(s))});
  }
  o.metric("max_component", worst);
  o.met = worst < 1e-12;
  o.summary = "max component " + sci(worst) + " (< 1e-12)";
  return o;
}

// Deviation restricted to the h-h and v-v blocks of the d-connection.
double dblock_error(const Tensor3& G, const Tensor3& C) {
  double e = 0.0;
  for (int c = 0; c < 4; ++c)
    for (int a = 0; a < 4; ++a)
      if (is_horizontal(c) == is_horizontal(a))
        for (int b = 0; b < 4; ++b) e = std::max(e, std::abs(G[c](a, b) - C[c](a, b)));
  return e;
}

Outcome christoffel(int) {
  Outcome o;
  double an = 0.0, fd = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ChartPoint u = oracles::random_point(seed);
    const MetricSpec sa = oracles::random_diagonal_spec(seed, DerivativeMode::Analytic);
    const MetricSpec sf = oracles::random_diagonal_spec(seed, DerivativeMode::FiniteDifference);
    const Tensor3 ref = oracles::coordinate_christoffel(sa, u);
    an = std::max(an, dblock_error(geometry::canonical_dconnection(geometry::sample(sa, u)), ref));
    fd = std::max(fd, dblock_error(geometry::canonical_dconnection(geometry::sample(sf, u)), ref));
  }
  o.metric("analytic_error", an);
  o.metric("fd_error", fd);
  o.met = an < 1e-6 && fd < 1e-4;
  o.summary = "10 metrics: analytic " + sci(an) + " (< 1e-6), fd " + sci(fd) + " (< 1e-4)";
  return o;
}

Outcome distortion_identity(int) {
  Outcome o;
  double err = 0.0;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const ChartPoint u = oracles::random_point(seed);
    const MetricSpec spec = oracles::random_offdiagonal_spec(seed, DerivativeMode::Analytic);
    const auto s = geometry::sample(spec, u);
    const Tensor3 G = geometry::canonical_dconnection(s);
    const Tensor3 Z = geometry::distortion(s);
    const Tensor3 ref = oracles::levi_civita_adapted(spec, u);
    for (int c = 0; c < 4; ++c) err = std::max(err, (G[c] + Z[c] - ref[c]).cwiseAbs().maxCoeff());
  }
  o.metric("max_error", err);
  o.met = err < 1e-5;
  o.summary = "10 off-diagonal specs: |G + Z - LC| " + sci(err) + " (< 1e-5)";
  return o;
}

// ---------------------------------------------------------------- 4-6 ansatz

Outcome family_a_residuals(int threads) {
  Outcome o;
  const auto g = family_a_data();
  ansatz::GenerateOptions opt;
  opt.threads = threads;
  const auto s = ansatz::generate_family_A(g, cube(32), opt);
  const auto r = ansatz::residuals(s, g);
  o.metric("r2_max", r.n2.max);
  o.metric("r3_max", r.n3.max);
  o.metric("r4_max", r.n4.max);
  o.metric("psi_residual", s.psi_residual);
  o.met = r.max_234() < 1e-6 && s.psi_residual < 1e-10;
  o.summary = "32^3: max r2-r4 " + sci(r.max_234()) + " (< 1e-6), psi stencil " + sci(s.psi_residual) + " (< 1e-10)";
  return o;
}

Outcome lc_gate(int threads) {
  Outcome o;
  auto g = family_a_data();
  g.phi = polynomial({{1.0, {0, 0, 1, 0}}});
  g.n1 = {polynomial({{1.0, {0, 1, 0, 0}}}), polynomial({{1.0, {1, 0, 0, 0}}})};  // gradient of x1 x2
  g.n2 = {ScalarField(), ScalarField()};
  ansatz::GenerateOptions opt;
  opt.threads = threads;
  const auto grid = cube(12);
  const auto s = ansatz::generate_family_A(g, grid, opt);
  const auto lc = ansatz::lc_constraint_check(s);
  const auto spec = ansatz::assemble_metric(ansatz::Family::A, g, s);
  double zmax = 0.0;
  for (const ChartPoint& u : {ChartPoint{0.2, 0.3, 0.4, 0.1}, ChartPoint{0.7, 0.5, 0.9, -0.3}, ChartPoint{0.5, 0.9, 0.1, 0}})
    zmax = std::max(zmax, max_abs(geometry::distortion(geometry::sample(spec, u))));

  g.n2 = {ScalarField::constant(0.5), ScalarField::constant(0.5)};
  const auto s2 = ansatz::generate_family_A(g, grid, opt);
  const auto lc2 = ansatz::lc_constraint_check(s2);
  o.metric("lc_max_violation", lc.max());
  o.metric("max_distortion", zmax);
  o.metric("flipped_max_violation", lc2.max());
  o.met = lc.pass && zmax < 1e-6 && !lc2.pass;
  o.summary = std::string("n2 = 0: ") + (lc.pass ? "PASS" : "FAIL") + ", max|Z| " + sci(zmax) +
              " (< 1e-6); n2 != 0: " + (lc2.pass ? "PASS" : "FAIL") + " (expected FAIL)";
  return o;
}

double manufactured_error(int n) {
  const ScalarField exact = product({trigonometric(TrigKind::Sin, 1, {1, 0, 0, 0}, 0, 0),
                                     trigonometric(TrigKind::Sin, 1, {0, 1, 0, 0}, 0, 0)});
  const ScalarField ups4 = product({ScalarField::constant(-1.0), exact});
  const auto ax = ansatz::Axis::span(0, kPi, n);
  const auto r = ansatz::solve_psi(ups4, ax, ax, exact);
  double e = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) e = std::max(e, std::abs(r.psi[i * n + j] - exact({ax.at(i), ax.at(j), 0, 0})));
  return e;
}

Outcome manufactured_psi(int) {
  Outcome o;
  const double e32 = manufactured_error(33), e64 = manufactured_error(65);
  o.metric("error_32", e32);
  o.metric("error_64", e64);
  o.metric("ratio", e32 / e64);
  o.met = e64 < 1e-6 && e32 / e64 >= 3.5;
  o.summary = "L_inf at 64^2 " + sci(e64) + " (< 1e-6), ratio " + sci(e32 / e64) + " (>= 3.5)";
  return o;
}

// ---------------------------------------------------------------- 7-10 sde

Outcome wiener_stats(int threads) {
  Outcome o;
  const sde::WienerConfig cfg{0.7, 1, 11, 0.05, 1000};
  const long paths = 1000;
  const auto draw = [&](int th) {
    std::vector<double> x(std::size_t(paths * cfg.steps));
    parallel_for(paths, th, [&](long p) {
      const Eigen::MatrixXd dW = sde::sample_wiener(cfg, std::uint64_t(p));
      std::copy(dW.data(), dW.data() + dW.size(), x.begin() + p * cfg.steps);
    });
    return x;
  };
  const std::vector<double> a = draw(1), b = draw(std::max(4, threads));
  const auto m = stats::moments(a);
  const double var = cfg.rho * cfg.dt;
  const double mean_bound = 3 * std::sqrt(var / double(m.n));
  const double var_bound = 3 * m.variance_stderr;
  const bool bitwise = a == b;
  o.metric("samples", double(m.n));
  o.metric("mean", m.mean);
  o.metric("variance", m.variance);
  o.metric("expected_variance", var);
  o.met = std::abs(m.mean) < mean_bound && std::abs(m.variance - var) < var_bound && bitwise;
  o.summary = "1e6 increments: |mean| " + sci(std::abs(m.mean)) + " (< " + sci(mean_bound) + "), |var - rho dt| " +
              sci(std::abs(m.variance - var)) + " (< " + sci(var_bound) + "), threads 1 vs " +
              std::to_string(std::max(4, threads)) + (bitwise ? " bitwise equal" : " DIFFER");
  return o;
}

Outcome ito_strat(int threads) {
  Outcome o;
  const double rho = 1.0;
  sde::IntegrationOptions opt;
  opt.wiener = {rho, 1, 1, 0.01, 100};
  opt.paths = 100000;
  opt.u0 = sde::State::Constant(1, 1.0);
  opt.threads = threads;
  const auto strat = sde::integrate_stratonovich(gbm(), opt);
  opt.wiener.seed = 2;
  const auto ito = sde::integrate_ito(sde::ito_equivalent(gbm(), rho), opt);
  const auto ms = stats::moments(strat.terminal), mi = stats::moments(ito.terminal);
  const double dm = std::abs(ms.mean - mi.mean), bm = 3 * std::hypot(ms.mean_stderr, mi.mean_stderr);
  const double dv = std::abs(ms.variance - mi.variance), bv = 3 * std::hypot(ms.variance_stderr, mi.variance_stderr);
  o.metric("strat_mean", ms.mean);
  o.metric("ito_mean", mi.mean);
  o.metric("strat_variance", ms.variance);
  o.metric("ito_variance", mi.variance);
  o.met = dm < bm && dv < bv;
  o.summary = "1e5 paths: |mean diff| " + sci(dm) + " (< " + sci(bm) + "), |var diff| " + sci(dv) + " (< " + sci(bv) + ")";
  return o;
}

struct ConstraintStats {
  double constraint = 0.0, frame = 0.0;
};

ConstraintStats scan(const sde::PathEnsemble& ens) {
  ConstraintStats c;
  const long R = ens.records_per_path();
  for (long p = 0; p < ens.recorded_paths; ++p)
    for (long r = 0; r < R; ++r) {
      const auto s = relativistic::RelativisticState::unpack(&ens.trajectories[(p * R + r) * ens.state_dim]);
      c.constraint = std::max(c.constraint, relativistic::constraint_violation(relativistic::four_velocity(s.v_hat)));
      c.frame = std::max(c.frame, relativistic::fiber_frame_error(s.v_hat, s.E));
    }
  return c;
}

Outcome relativistic_constraint(int threads) {
  Outcome o;
  auto opt = rel_options(1.0, 1e-3, 1000, 10000, threads);
  opt.record_every = 100;  // the re-orthonormalization cadence
  opt.record_paths = opt.paths;
  const auto s0 = rest_state(Vec4(0.1, 0.2, 0.3, 0.4), Eigen::Vector3d(0.2, 0.1, -0.3));
  const ConstraintStats sr = scan(relativistic::sr_relativistic_diffusion(s0, opt));
  const ConstraintStats gr = scan(relativistic::gr_relativistic_diffusion(bounded_spec(), s0, opt));

  auto small = rel_options(1.0, 1e-3, 1000, 256, 1);
  small.record_every = 100;
  small.record_paths = 16;
  const auto a = relativistic::sr_relativistic_diffusion(s0, small);
  small.threads = std::max(3, threads);
  const auto b = relativistic::gr_relativistic_diffusion(MetricSpec::flat(), s0, small);
  const bool bitwise = a.terminal == b.terminal && a.trajectories == b.trajectories;

  const double c = std::max(sr.constraint, gr.constraint), f = std::max(sr.frame, gr.frame);
  o.metric("max_constraint", c);
  o.metric("max_frame_error", f);
  o.metric("sr_frame_error", sr.frame);
  o.metric("gr_frame_error", gr.frame);
  o.met = c < 1e-10 && f < 1e-6 && bitwise;
  o.summary = "1e4 SR + 1e4 GR paths x 1e3 steps: |eta v v + 1| " + sci(c) + " (< 1e-10), Gram " + sci(f) +
              " (< 1e-6, K = 100); GR on flat spec " + (bitwise ? "bitwise equals SR" : "DIFFERS from SR");
  return o;
}

Outcome geodesic_limit(int) {
  Outcome o;
  const MetricSpec spec = product_spec();
  const Vec4 u0(0.1, 0.2, 0.3, 0.4);
  const Eigen::Vector3d v(0.3, -0.2, 0.1);
  const auto e0 = geometry::orthonormalize_frame(geometry::sample(spec, {0.1, 0.2, 0.3, 0.4}), spec.signature);
  const oracles::GeodesicState ref =
      oracles::rk4_geodesic(spec, {u0, e0 * relativistic::four_velocity(v)}, 1.0, 400);
  std::vector<double> dts, err;
  for (double dt : {0.04, 0.02, 0.01, 0.005}) {
    const auto ens = relativistic::gr_relativistic_diffusion(spec, rest_state(u0, v),
                                                             rel_options(0.0, dt, std::lround(1.0 / dt), 1, 1));
    const auto s = relativistic::RelativisticState::unpack(&ens.terminal[0]);
    dts.push_back(dt);
    err.push_back((s.u - ref.x).cwiseAbs().maxCoeff());
  }
  bool decreasing = true;
  for (std::size_t k = 1; k < err.size(); ++k) decreasing = decreasing && err[k] < err[k - 1];
  const double order = stats::observed_order(dts, err);
  for (std::size_t k = 0; k < err.size(); ++k) o.metric("error_dt_" + sci(dts[k]), err[k]);
  o.metric("order", order);
  o.met = decreasing && order >= 0.9;
  o.summary = "rho = 0, 4 step sizes: error " + sci(err.front()) + " -> " + sci(err.back()) + ", observed order " +
              sci(order) + " (>= 1 within 0.1)";
  return o;
}

// ---------------------------------------------------------------- 11-12 fp

Outcome mc_fp(int threads) {
  Outcome o;
  const auto lat = fp::Lattice::box({0, 1}, {-4, -4}, {4, 4}, {64, 64});
  const std::vector<sde::SDESystem> battery{
      system2([](double, double) { return Eigen::Matrix2d::Identity().eval(); },
              [](double, double) { return Eigen::Vector2d::Zero().eval(); }),
      system2([](double, double) { return Eigen::Matrix2d{{1.0, 0.0}, {0.0, 0.7}}; },
              [](double, double) { return Eigen::Vector2d(0.6, -0.3); }),
      system2(
          [](double x, double y) {
            return Eigen::Matrix2d{{1 + 0.3 * std::sin(kPi * x / 4), 0.0}, {0.0, 1 + 0.2 * std::cos(kPi * y / 4)}};
          },
          varying_drift),
  };
  double l1 = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < battery.size(); ++k) {
    const auto c = fp::compare_with_monte_carlo(battery[k], lat, 1.0, 1.0, 100000, 11 + k, 16, 0.01, threads);
    o.metric("l1_" + std::to_string(k), c.l1);
    l1 = std::max(l1, c.l1);
    mass = std::max(mass, c.mass_error);
  }
  o.metric("max_mass_error", mass);
  o.met = l1 < 0.05 && mass < 1e-8;
  o.summary = "3 systems, 1e5 paths, tau = 1: max L1 " + sci(l1) + " (< 0.05), mass error " + sci(mass) + " (< 1e-8)";
  return o;
}

Outcome duality(int) {
  Outcome o;
  const auto lat = fp::Lattice::box({0, 1}, {-4, -4}, {4, 4}, {24, 24});
  const Eigen::VectorXd f = random_field(lat.size(), 1), phi = random_field(lat.size(), 2);
  const auto sys = system2(varying_sigma, varying_drift);
  const fp::Generator ito = fp::build_generator_ito(sys, MetricSpec::flat(), lat, 1.3);
  const fp::Generator strat = fp::build_generator_strat(sys, MetricSpec::flat(), lat, 1.3);
  const fp::Generator back = fp::build_backward_generator(conformal_spec(), [](const ChartPoint& u) {
    return Vec4(std::cos(kPi * u[1] / 4), 0.3 * std::sin(kPi * u[0] / 4), 0, 0);
  }, 1.1, lat);
  const double r_ito = fp::duality_residual(ito, fp::adjoint(ito), f, phi, ito.weight);
  const double r_strat = fp::duality_residual(strat, fp::adjoint(strat), f, phi, strat.weight);
  const double r_fwd = fp::duality_residual(back, fp::forward_generator(back), f, phi, back.weight);
  double r_vel = 0.0;
  for (int dims : {1, 3}) {
    fp::VelocityLattice vl;
    vl.dims = dims;
    vl.lo = -2.0;
    vl.hi = 1.5;
    vl.n = 12;
    const fp::Generator g = fp::build_velocity_laplacian(vl);
    r_vel = std::max(r_vel, fp::duality_residual(g, g, random_field(vl.size(), 7), random_field(vl.size(), 8), g.weight));
  }
  const double worst = std::max({r_ito, r_strat, r_fwd});
  o.metric("ito", r_ito);
  o.metric("stratonovich", r_strat);
  o.metric("forward_weighted", r_fwd);
  o.metric("velocity_laplacian", r_vel);
  o.met = worst < 1e-8 && r_vel < 1e-8;
  o.summary = "generators: max residual " + sci(worst) + " (< 1e-8); velocity Laplace-Beltrami " + sci(r_vel) + " (< 1e-8)";
  return o;
}

// ---------------------------------------------------------------- 13-14 stochastic

stochastic::RandomGeneratorConfig heat_config(double varpi, long n) {
  stochastic::RandomGeneratorConfig c;
  c.varpi = varpi;
  c.realizations = n;
  c.seed = 5;
  c.heat.modes = 2;
  c.heat.period = {2.0, 2.0};
  return c;
}

Outcome ensemble_validity(int threads) {
  Outcome o;
  const auto grid = cube(12);
  const auto g = family_a_data();
  const std::vector<stochastic::GridIndex> pts{{2, 3, 4}, {6, 6, 6}, {9, 1, 11}, {4, 10, 8}};
  stochastic::EnsembleOptions opt;
  opt.threads = threads;
  opt.keep_solutions = false;
  opt.probes = pts;

  bool valid = true;
  double worst_fraction = 1.0, worst_residual = 0.0;
  std::vector<double> var;
  for (double vp : {0.01, 0.02, 0.04}) {
    const auto e = stochastic::generate_ensemble(ansatz::Family::A, g, heat_config(vp, 40), grid, opt);
    const double frac = double(e.accepted()) / double(e.realizations.size());
    worst_fraction = std::min(worst_fraction, frac);
    for (const auto& r : e.realizations)
      if (r.accepted) worst_residual = std::max(worst_residual, r.residual);
    if (vp == 0.01) valid = frac >= 0.95;
    const auto st = stochastic::ensemble_statistics(e, stochastic::Coefficient::H4, pts);
    var.push_back(st.covariance.diagonal().mean());
  }
  double ratio_dev = 1.0;
  for (int k = 0; k < 2; ++k) {
    const double ratio = var[k + 1] / var[k] / 4.0;
    ratio_dev = std::max(ratio_dev, std::max(ratio, 1.0 / ratio));
    o.metric("variance_ratio_over_4_" + std::to_string(k), ratio);
  }

  auto keep = opt;
  keep.keep_solutions = true;
  const auto sure = ansatz::generate_family_A(g, grid);
  const auto zero = stochastic::generate_ensemble(ansatz::Family::A, g, heat_config(0.0, 4), grid, keep);
  bool bitwise = zero.accepted() == 4;
  for (const auto& r : zero.realizations)
    bitwise = bitwise && r.solution && r.solution->h3 == sure.h3 && r.solution->h4 == sure.h4 &&
              r.solution->w == sure.w && r.solution->n == sure.n;

  o.metric("accepted_fraction_min", worst_fraction);
  o.metric("max_accepted_residual", worst_residual);
  o.metric("ratio_factor", ratio_dev);
  o.met = valid && worst_residual < 1e-4 && ratio_dev <= 1.5 && bitwise;
  o.summary = "varpi 0.01: accepted " + sci(100 * worst_fraction) + "% (>= 95%), residual " + sci(worst_residual) +
              " (< 1e-4); variance ratio / 4 within factor " + sci(ratio_dev) + " (<= 1.5); varpi = 0 " +
              (bitwise ? "bitwise sure" : "DIFFERS");
  return o;
}

Outcome strat_identity(int threads) {
  Outcome o;
  const auto rep = stochastic::stratonovich_identity(20000, 16, 4, 1.0, 99, threads);
  bool decreasing = true;
  double worst_rel = 0.0;  // against the exact RMS sqrt(T dt) / 2
  for (std::size_t l = 0; l < rep.rms.size(); ++l) {
    o.metric("rms_" + std::to_string(rep.steps[l]), rep.rms[l]);
    worst_rel = std::max(worst_rel, std::abs(rep.rms[l] / rep.expected[l] - 1.0));
    if (l > 0) decreasing = decreasing && rep.rms[l] < rep.rms[l - 1];
  }
  o.metric("max_relative_rms_deviation", worst_rel);
  o.metric("order", rep.order);
  o.metric("order_stderr", rep.order_stderr);
  o.met = decreasing && worst_rel < 0.05 && rep.order + 3 * rep.order_stderr >= 0.5;
  o.summary = "16 -> 128 steps, 2e4 paths: RMS " + sci(rep.rms.front()) + " -> " + sci(rep.rms.back()) + " (within " +
              sci(100 * worst_rel) + "% of sqrt(T dt)/2), order " + sci(rep.order) + " +- " + sci(rep.order_stderr) +
              " (>= 0.5 within 3 se)";
  return o;
}

using CheckFn = Outcome (*)(int);

const std::vector<std::pair<CheckInfo, CheckFn>>& registry() {
  static const std::vector<std::pair<CheckInfo, CheckFn>> r{
      {{"flat-nil", 1, 1, "flat d-metric: connection, torsion, anholonomy, distortion vanish"}, flat_nil},
      {{"christoffel", 2, 10, "d-connection blocks vs finite-difference Christoffels"}, christoffel},
      {{"distortion", 3, 30, "canonical + distortion = Levi-Civita"}, distortion_identity},
      {{"family-a-residuals", 4, 60, "family A field-equation residuals on 32^3"}, family_a_residuals},
      {{"lc-gate", 5, 30, "Levi-Civita constraint check and its flip"}, lc_gate},
      {{"manufactured-psi", 6, 10, "psi solver on a manufactured solution"}, manufactured_psi},
      {{"wiener-stats", 7, 10, "Wiener increment statistics and reproducibility"}, wiener_stats},
      {{"ito-strat", 8, 30, "Ito vs Stratonovich ensembles for sigma(u) = u"}, ito_strat},
      {{"relativistic-constraint", 9, 60, "mass-shell and fiber-frame constraints"}, relativistic_constraint},
      {{"geodesic-limit", 10, 30, "rho = 0 relativistic diffusion vs RK4 geodesics"}, geodesic_limit},
      {{"mc-fp", 11, 120, "Fokker-Planck vs Monte Carlo histogram"}, mc_fp},
      {{"duality", 12, 10, "discrete generator duality and velocity self-adjointness"}, duality},
      {{"ensemble-validity", 13, 120, "stochastic family A ensembles"}, ensemble_validity},
      {{"strat-identity", 14, 10, "midpoint sums of int W o dW"}, strat_identity},
  };
  return r;
}

}  // namespace

const std::vector<CheckInfo>& check_catalog() {
  static const std::vector<CheckInfo> c = [] {
    std::vector<CheckInfo> v;
    for (const auto& [info, fn] : registry()) v.push_back(info);
    return v;
  }();
  return c;
}

const CheckInfo& check_info(const std::string& name) {
  for (const auto& c : check_catalog())
    if (c.name == name) return c;
  std::string names;
  for (const auto& c : check_catalog()) names += " " + c.name;
  throw ConfigError("unknown check '" + name + "'; available:" + names);
}

std::string CheckResult::to_json() const {
  nlohmann::json j{{"check", info.name},       {"criterion", info.criterion}, {"passed", passed()},
                   {"criterion_met", met},     {"seconds", seconds},          {"budget_seconds", info.budget_seconds},
                   {"summary", summary}};
  j["metrics"] = nlohmann::json::object();
  for (const auto& [k, v] : metrics) j["metrics"][k] = v;
  return j.dump();
}

CheckResult run_check(const std::string& name, int threads) {
  CheckResult res;
  res.info = check_info(name);
  CheckFn fn = nullptr;
  for (const auto& [info, f] : registry())
    if (info.name == name) fn = f;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    Outcome o = fn(std::max(1, threads));
    res.met = o.met;
    res.summary = std::move(o.summary);
    res.metrics = std::move(o.metrics);
  } catch (const std::exception& e) {
    res.met = false;
    res.summary = std::string("error: ") + e.what();
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace nhdiff::app
