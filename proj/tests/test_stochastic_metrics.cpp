#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "nhdiff/fokker_planck.hpp"
#include "nhdiff/stats.hpp"
#include "nhdiff/stochastic_metrics.hpp"

using namespace nhdiff;
using namespace nhdiff::ansatz;
using namespace nhdiff::stochastic;

namespace {

constexpr double kPi = std::numbers::pi;

Grid cube(int n) { return {{Axis::span(0, 1, n), Axis::span(0, 1, n), Axis::span(0, 1, n)}}; }

GeneratingData family_a_data() {
  GeneratingData g;
  g.phi = sum({polynomial({{1.0, {0, 0, 1, 0}}}), product({trigonometric(TrigKind::Sin, 0.1, {1, 0, 0, 0}, 0, 0),
                                                           trigonometric(TrigKind::Sin, 1.0, {0, 1, 0, 0}, 0, 0)})});
  g.upsilon2 = ScalarField::constant(1.0);
  g.upsilon4 = ScalarField::constant(0.0);
  g.h4_0 = ScalarField::constant(20.0);
  g.n1 = {polynomial({{1.0, {0, 1, 0, 0}}}), polynomial({{1.0, {1, 0, 0, 0}}})};
  g.n2 = {ScalarField::constant(0.5), trigonometric(TrigKind::Cos, 0.3, {1, 1, 0, 0}, 0, 0)};
  return g;
}

// phi = t, n2 = 0, curl-free n1: satisfies the Levi-Civita conditions.
GeneratingData lc_data() {
  GeneratingData g = family_a_data();
  g.phi = polynomial({{1.0, {0, 0, 1, 0}}});
  g.n2 = {ScalarField::constant(0.0), ScalarField::constant(0.0)};
  return g;
}

RandomGeneratorConfig heat_config(double varpi, long n, std::uint64_t seed = 5) {
  RandomGeneratorConfig c;
  c.varpi = varpi;
  c.realizations = n;
  c.seed = seed;
  c.heat.modes = 2;
  c.heat.period = {2.0, 2.0};
  return c;
}

bool same(const GridField& a, const GridField& b) { return a == b; }

double mean_variance(const MetricEnsemble& e, Coefficient c, const std::vector<GridIndex>& pts) {
  const auto st = ensemble_statistics(e, c, pts);
  return st.covariance.diagonal().mean();
}

}  // namespace

TEST(GeneratingFunction, ZeroVarpiReturnsPhiBitwise) {
  const Grid grid = cube(8);
  const GeneratingData g = family_a_data();
  const ScalarField p = random_generating_function(heat_config(0.0, 1), g.phi, grid, 3);
  for (int k = 0; k < 8; ++k) {
    const ChartPoint u = grid.point(2, 5, k);
    EXPECT_EQ(p(u), g.phi(u));
    EXPECT_EQ(p.jet(u).h, g.phi.jet(u).h);
  }
}

TEST(GeneratingFunction, SubSeedsAreDeterministic) {
  const Grid grid = cube(8);
  RandomGeneratorConfig c = heat_config(1.0, 4);
  for (TildeKind kind : {TildeKind::HDiffusion, TildeKind::RandomSource}) {
    c.kind = kind;
    const ChartPoint u{0.3, 0.7, 0.2, 0};
    EXPECT_EQ(tilde_field(c, grid, 2)(u), tilde_field(c, grid, 2)(u));
    EXPECT_NE(tilde_field(c, grid, 2)(u), tilde_field(c, grid, 3)(u));
    RandomGeneratorConfig d = c;
    d.seed = c.seed + 1;
    EXPECT_NE(tilde_field(c, grid, 2)(u), tilde_field(d, grid, 2)(u));
  }
}

TEST(GeneratingFunction, HeatModesSolveTheHDiffusionEquation) {
  const Grid grid = cube(8);
  RandomGeneratorConfig c = heat_config(1.0, 1);
  c.heat.rho = 0.8;
  c.heat.modes = 3;
  c.heat.psi = ScalarField::constant(0.4);
  const double D = 0.5 * 0.8 * std::exp(-0.4);
  for (long r = 0; r < 3; ++r) {
    const ScalarField f = tilde_field(c, grid, r);
    for (const ChartPoint u : {ChartPoint{0.1, 0.2, 0.3, 0}, ChartPoint{0.9, 0.4, 0.8, 0}}) {
      const Jet j = f.jet(u), fd = f.fd_jet(u);
      EXPECT_NEAR(j.g(2), D * (j.h(0, 0) + j.h(1, 1)), 1e-12);
      EXPECT_LT((j.g - fd.g).cwiseAbs().maxCoeff(), 1e-7);
      EXPECT_LT((j.h - fd.h).cwiseAbs().maxCoeff(), 1e-4);
    }
  }
}

TEST(GeneratingFunction, HeatModesMatchTheLatticeSolver) {
  // Evolve the t0 profile with the finite-difference h-diffusion solver and
  // compare to the closed form at t = 0.3.
  const Grid grid = cube(8);
  RandomGeneratorConfig c = heat_config(1.0, 1);
  c.heat.psi = ScalarField::constant(0.3);
  const ScalarField f = tilde_field(c, grid, 1);
  const auto lat = fp::Lattice::box({0, 1}, {0, 0}, {2, 2}, {64, 64});
  const Eigen::VectorXd f0 = fp::sample_on(lat, [&](const ChartPoint& u) { return f({u[0], u[1], 0.0, 0}); });
  const Eigen::VectorXd ft = fp::h_diffusion_solve(lat, c.heat.psi, f0, 0.3, c.heat.rho);
  const Eigen::VectorXd exact = fp::sample_on(lat, [&](const ChartPoint& u) { return f({u[0], u[1], 0.3, 0}); });
  EXPECT_LT((ft - exact).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(GeneratingFunction, BumpDeviationFollowsTheHeatKernel) {
  const Grid grid = cube(9);
  RandomGeneratorConfig c = heat_config(1.0, 1);
  c.heat.bump_width = 0.02;
  c.heat.bump_center = {0.5, 0.5};
  const ScalarField phi = polynomial({{1.0, {0, 0, 1, 0}}});
  const ScalarField p = random_generating_function(c, phi, grid, 0);
  const double D = 0.5;
  for (int k = 0; k < 9; ++k) {
    const double t = grid.axes[2].at(k);
    const double centre = p({0.5, 0.5, t, 0}) - phi({0.5, 0.5, t, 0});
    EXPECT_NEAR(centre, 0.02 / (0.02 + 2 * D * t), 1e-14);
    for (int i = 0; i < 9; ++i)
      EXPECT_LE(p({grid.axes[0].at(i), 0.3, t, 0}) - phi({0, 0, t, 0}), centre);
  }
  const ScalarField f = tilde_field(c, grid, 0);
  const Jet j = f.jet({0.4, 0.55, 0.2, 0}), fd = f.fd_jet({0.4, 0.55, 0.2, 0});
  EXPECT_NEAR(j.g(2), D * (j.h(0, 0) + j.h(1, 1)), 1e-10);
  EXPECT_LT((j.h - fd.h).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(GeneratingFunction, CorrelatedFieldHasExponentialCovariance) {
  const Grid grid = cube(8);
  RandomGeneratorConfig c = heat_config(1.0, 1);
  c.kind = TildeKind::RandomSource;
  c.source.correlation_length = 0.5;
  const long N = 4000;
  std::vector<double> a(N), b(N);
  for (long r = 0; r < N; ++r) {
    const ScalarField f = tilde_field(c, grid, r);
    a[r] = f({0.2, 0.3, 0, 0});
    b[r] = f({0.5, 0.7, 0, 0});  // distance 0.5
  }
  const auto ma = stats::moments(a);
  EXPECT_NEAR(ma.variance, 1.0, 3 * ma.variance_stderr);
  const double cov = stats::covariance(a, b);
  // stderr of a covariance near rho: sqrt((1 + rho^2) / N)
  EXPECT_NEAR(cov, std::exp(-1.0), 3 * std::sqrt((1 + std::exp(-2.0)) / N));
}

TEST(MetricIntegral, ConstantAndSmoothIntegrands) {
  const Grid grid{{Axis::span(0, 1, 3), Axis::span(0, 1, 3), Axis::span(0.5, 1.5, 11)}};
  GridField h(grid.size(), -2.0);
  const GridField I = stratonovich_metric_integral(h, grid);
  for (int k = 0; k < 11; ++k) EXPECT_NEAR(I[grid.index(1, 2, k)], -2.0 * (grid.axes[2].at(k) - 0.5), 1e-14);

  double prev = 0;
  for (int n : {17, 33, 65}) {
    const Grid g{{Axis::span(0, 1, 3), Axis::span(0, 1, 3), Axis::span(0, 2, n)}};
    GridField f(g.size());
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < n; ++k) f[g.index(i, j, k)] = std::cos(g.axes[2].at(k) + i);
    const GridField J = stratonovich_metric_integral(f, g);
    const double err = std::abs(J[g.index(2, 1, n - 1)] - (std::sin(2.0 + 2) - std::sin(2.0)));
    if (prev > 0) EXPECT_NEAR(prev / err, 4.0, 0.1);
    prev = err;
  }
}

TEST(MetricIntegral, MidpointSums) {
  // x = t: midpoint rule for cos, second order.
  double prev = 0;
  for (int n : {8, 16, 32}) {
    std::vector<double> f(2 * n + 1), x(2 * n + 1);
    for (int s = 0; s <= 2 * n; ++s) {
      x[s] = s * 1.0 / (2 * n);
      f[s] = std::cos(x[s]);
    }
    const double err = std::abs(midpoint_sum(f, x) - std::sin(1.0));
    if (prev > 0) EXPECT_NEAR(prev / err, 4.0, 0.1);
    prev = err;
  }
  EXPECT_THROW(midpoint_sum({1, 2}, {1, 2}), ConfigError);
}

TEST(MetricIntegral, AveragedSumTelescopesForBrownian) {
  // The endpoint-average form of int W o dW is W^2 / 2 up to rounding on any
  // partition, so the midpoint form is the one with a rate.
  std::mt19937_64 g(3);
  std::normal_distribution<double> n(0, 0.1);
  double w = 0, s = 0;
  for (int k = 0; k < 1000; ++k) {
    const double dw = n(g);
    s += (w + 0.5 * dw) * dw;
    w += dw;
  }
  EXPECT_NEAR(s, 0.5 * w * w, 1e-12);
}

TEST(StratonovichIdentity, MidpointErrorShrinksAtHalfOrder) {
  const auto rep = stratonovich_identity(20000, 16, 4, 1.0, 99, 2);
  ASSERT_EQ(rep.rms.size(), 4u);
  for (std::size_t l = 0; l < 4; ++l) {
    // E[err^2] = T dt / 4; the RMS of 2e4 samples is within a few percent.
    EXPECT_NEAR(rep.rms[l] / rep.expected[l], 1.0, 0.05) << l;
    if (l > 0) EXPECT_LT(rep.rms[l], rep.rms[l - 1]);
  }
  EXPECT_GE(rep.order + 3 * rep.order_stderr, 0.5);
  EXPECT_LT(rep.order_stderr, 0.05);
}

TEST(Ensemble, ZeroVarpiReproducesTheSureSolution) {
  const Grid grid = cube(10);
  const GeneratingData g = family_a_data();
  const AnsatzSolution sure = generate_family_A(g, grid);
  EnsembleOptions opt;
  opt.threads = 2;
  const MetricEnsemble e = generate_ensemble(Family::A, g, heat_config(0.0, 4), grid, opt);
  ASSERT_EQ(e.accepted(), 4);
  for (const auto& r : e.realizations) {
    EXPECT_TRUE(same(r.solution->h3, sure.h3));
    EXPECT_TRUE(same(r.solution->h4, sure.h4));
    EXPECT_TRUE(same(r.solution->w[0], sure.w[0]));
    EXPECT_TRUE(same(r.solution->n[1], sure.n[1]));
  }
  const auto st = ensemble_statistics(e, Coefficient::H4, {{1, 2, 3}, {5, 5, 9}});
  EXPECT_EQ(st.covariance.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ensemble, FamilyASmallVarpiIsValidAndScalesQuadratically) {
  const Grid grid = cube(12);
  const GeneratingData g = family_a_data();
  const std::vector<GridIndex> pts{{2, 3, 4}, {6, 6, 6}, {9, 1, 11}, {4, 10, 8}};
  std::vector<double> var;
  for (double vp : {0.01, 0.02, 0.04}) {
    const MetricEnsemble e = generate_ensemble(Family::A, g, heat_config(vp, 40), grid);
    EXPECT_GE(e.accepted(), 38) << vp;
    for (const auto& r : e.realizations)
      if (r.accepted) EXPECT_LT(r.residual, 1e-4);
    var.push_back(mean_variance(e, Coefficient::H4, pts));
  }
  for (int k = 0; k < 2; ++k) {
    const double ratio = var[k + 1] / var[k] / 4.0;
    EXPECT_GT(ratio, 1 / 1.5);
    EXPECT_LT(ratio, 1.5);
  }
}

TEST(Ensemble, DeterministicAcrossThreadCounts) {
  const Grid grid = cube(8);
  RandomGeneratorConfig c = heat_config(0.02, 6);
  c.kind = TildeKind::RandomSource;
  c.source.upsilon2_amplitude = 0.1;
  EnsembleOptions a, b;
  b.threads = 3;
  const MetricEnsemble e1 = generate_ensemble(Family::A, family_a_data(), c, grid, a);
  const MetricEnsemble e2 = generate_ensemble(Family::A, family_a_data(), c, grid, b);
  for (std::size_t r = 0; r < 6; ++r) {
    EXPECT_EQ(e1.realizations[r].accepted, e2.realizations[r].accepted);
    EXPECT_TRUE(same(e1.realizations[r].solution->h3, e2.realizations[r].solution->h3));
    EXPECT_EQ(e1.realizations[r].residual, e2.realizations[r].residual);
  }
  EXPECT_FALSE(same(e1.realizations[0].solution->h3, e1.realizations[1].solution->h3));
}

TEST(Ensemble, VacuumBranchKeepsR2R3ExactlyZero) {
  const Grid grid{{Axis::span(0, 1, 8), Axis::span(0, 1, 8), Axis::span(0, 1, 33)}};
  GeneratingData g;
  g.upsilon2 = ScalarField::constant(0.0);
  g.upsilon4 = ScalarField::constant(0.0);
  g.h3 = ScalarField::constant(-1.0);
  g.n1 = {ScalarField::constant(0.0), ScalarField::constant(0.0)};
  g.n2 = {ScalarField::constant(1.0), ScalarField::constant(1.0)};
  g.w = {polynomial({{0.2, {0, 1, 0, 0}}}), ScalarField::constant(0.1)};
  RandomGeneratorConfig c = heat_config(0.1, 8);
  c.kind = TildeKind::Brownian;
  const MetricEnsemble e = generate_ensemble(Family::Vacuum, g, c, grid);
  for (const auto& r : e.realizations) {
    EXPECT_EQ(r.r2, 0.0);
    EXPECT_EQ(r.r3, 0.0);
    EXPECT_TRUE(r.accepted) << r.reason;
    EXPECT_TRUE(same(r.solution->w[0], e.realizations[0].solution->w[0]));
    EXPECT_TRUE(same(r.solution->h4, e.realizations[0].solution->h4));
  }
  EXPECT_FALSE(same(e.realizations[0].solution->n[0], e.realizations[1].solution->n[0]));
}

TEST(Ensemble, VacuumNVarianceMatchesTheIntegralOracle) {
  // h3 = -1 + varpi W(t), h4 = 1, 2n = 1: n(t) = int sqrt(1 - varpi W) dt, so to
  // leading order Var n(t_k) = varpi^2 / 4 Var(sum_m c_m W(t_m)) with trapezoid weights.
  const int nt = 17;
  const Grid grid{{Axis::span(0, 1, 8), Axis::span(0, 1, 8), Axis::span(0, 1, nt)}};
  GeneratingData g;
  g.upsilon2 = ScalarField::constant(0.0);
  g.upsilon4 = ScalarField::constant(0.0);
  g.n1 = {ScalarField::constant(0.0), ScalarField::constant(0.0)};
  g.n2 = {ScalarField::constant(1.0), ScalarField::constant(1.0)};
  const double vp = 0.01;
  RandomGeneratorConfig c = heat_config(vp, 10000, 21);
  c.kind = TildeKind::Brownian;
  EnsembleOptions opt;
  opt.threads = 2;
  opt.keep_solutions = false;
  opt.probes = {{1, 0, 4}, {1, 0, 8}, {1, 0, 16}};
  const MetricEnsemble e = generate_ensemble(Family::Vacuum, g, c, grid, opt);
  ASSERT_EQ(e.accepted(), 10000);
  EXPECT_THROW(ensemble_statistics(e, Coefficient::N1, {{2, 0, 4}}), ConfigError);
  const double dt = grid.axes[2].step;
  double prev = -1;
  for (int k : {4, 8, 16}) {
    const auto st = ensemble_statistics(e, Coefficient::N1, {{1, 0, k}});
    const double v = st.covariance(0, 0);
    double oracle = 0;
    for (int a = 0; a <= k; ++a)
      for (int b = 0; b <= k; ++b) {
        const double ca = (a == 0 || a == k) ? 0.5 * dt : dt, cb = (b == 0 || b == k) ? 0.5 * dt : dt;
        oracle += ca * cb * std::min(a, b) * dt;
      }
    oracle *= vp * vp / 4;
    EXPECT_NEAR(v, oracle, 3 * oracle * std::sqrt(2.0 / 9999)) << k;
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(Ensemble, AllRejectedIsAnError) {
  const Grid grid = cube(8);
  GeneratingData g = family_a_data();
  g.phi = polynomial({{1.0, {0, 0, 1, 0}}});
  RandomGeneratorConfig c = heat_config(1.0, 3);
  c.kind = TildeKind::Custom;
  // phi~ = -t cancels phi* everywhere
  c.custom = [](long) { return polynomial({{-1.0, {0, 0, 1, 0}}}); };
  EXPECT_THROW(generate_ensemble(Family::A, g, c, grid), NumericalError);
  c.custom = [](long r) { return polynomial({{r == 1 ? -1.0 : 0.1, {0, 0, 1, 0}}}); };
  const MetricEnsemble e = generate_ensemble(Family::A, g, c, grid);
  EXPECT_EQ(e.accepted(), 2);
  EXPECT_FALSE(e.realizations[1].accepted);
  EXPECT_NE(e.realizations[1].reason.find("phi*"), std::string::npos);
}

TEST(Ensemble, StatisticsNeedTwoRealizations) {
  const MetricEnsemble e = generate_ensemble(Family::A, family_a_data(), heat_config(0.01, 1), cube(8));
  EXPECT_THROW(ensemble_statistics(e, Coefficient::H3, {{0, 0, 0}}), ConfigError);
  EXPECT_THROW(coefficient_from_name("h5"), ConfigError);
}

TEST(LcTransition, TimeOnlyRandomizationStaysCompatible) {
  const Grid grid = cube(9);
  RandomGeneratorConfig c = heat_config(0.05, 5);
  c.kind = TildeKind::Custom;
  c.custom = [](long r) {
    std::mt19937_64 gen(r);
    const double a = std::normal_distribution<double>(0, 1)(gen);
    return trigonometric(TrigKind::Sin, a, {0, 0, 1, 0}, 0, 0);
  };
  const MetricEnsemble e = generate_ensemble(Family::A, lc_data(), c, grid);
  const auto rep = lc_transition_report(e);
  ASSERT_EQ(rep.size(), 5u);
  for (const auto& r : rep) EXPECT_TRUE(r.compatible) << r.index << " " << r.dominant << " " << r.max_violation;
}

TEST(LcTransition, XDependentRandomizationIsDistorted) {
  const Grid grid = cube(9);
  const MetricEnsemble e = generate_ensemble(Family::A, lc_data(), heat_config(0.05, 4), grid);
  for (const auto& r : lc_transition_report(e)) {
    EXPECT_FALSE(r.compatible);
    EXPECT_GT(r.max_violation, 1e-6);
    EXPECT_FALSE(r.dominant.empty());
  }
  const MetricEnsemble sure = generate_ensemble(Family::A, lc_data(), heat_config(0.0, 3), grid);
  for (const auto& r : lc_transition_report(sure)) EXPECT_TRUE(r.compatible);
}
