#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "nhdiff/fokker_planck.hpp"
#include "nhdiff/sde.hpp"

using namespace nhdiff;
using namespace nhdiff::fp;
using nhdiff::geometry::MetricSpec;

namespace {

constexpr double kPi = std::numbers::pi;

Lattice square(int n, double half, Boundary b = Boundary::Periodic) {
  return Lattice::box({0, 1}, {-half, -half}, {half, half}, {n, n}, b);
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

sde::SDESystem brownian2() {
  return system2([](double, double) { return Eigen::Matrix2d::Identity().eval(); },
                 [](double, double) { return Eigen::Vector2d::Zero().eval(); });
}

// Gaussian of variance s2 per axis centred at the origin.
double gauss(double x, double y, double s2) { return std::exp(-(x * x + y * y) / (2 * s2)) / (2 * kPi * s2); }

// Heat kernel on the torus of side L by summing images.
double periodic_gauss(double x, double y, double s2, double L) {
  double s = 0;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j) s += gauss(x + i * L, y + j * L, s2);
  return s;
}

Eigen::VectorXd random_field(std::size_t n, unsigned seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = d(g);
  return v;
}

MetricSpec conformal_spec() {
  // g_ij = exp(0.3 sin(pi x1 / 4) + 0.2 cos(pi x2 / 4)) delta_ij, periodic on [-4, 4)^2.
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

}  // namespace

TEST(Lattice, IndexingRoundTrip) {
  const Lattice lat = Lattice::box({0, 2}, {0, 1}, {1, 2}, {8, 10}, Boundary::Absorbing);
  EXPECT_DOUBLE_EQ(lat.spacing[0], 1.0 / 7);
  EXPECT_DOUBLE_EQ(lat.spacing[1], 1.0 / 9);
  for (std::size_t r = 0; r < lat.size(); ++r) EXPECT_EQ(lat.index(lat.multi(r)), r);
  EXPECT_EQ(lat.multi(1)[1], 1);  // last axis fastest
  const ChartPoint u = lat.point(lat.size() - 1);
  EXPECT_DOUBLE_EQ(u[0], 1.0);
  EXPECT_DOUBLE_EQ(u[2], 2.0);
  EXPECT_EQ(lat.nearest(u), lat.size() - 1);

  const Lattice per = square(8, 1.0);
  EXPECT_DOUBLE_EQ(per.spacing[0], 0.25);
  EXPECT_EQ(per.nearest({1.0, -1.0, 0, 0}), per.nearest({-1.0, -1.0, 0, 0}));
}

TEST(Lattice, RejectsCoarseGrids) {
  EXPECT_THROW(square(7, 1.0).validate(), ConfigError);
  EXPECT_THROW(build_generator_ito(brownian2(), MetricSpec::flat(), square(6, 1.0), 1.0), ConfigError);
  EXPECT_NO_THROW(square(8, 1.0).validate());
}

TEST(ItoGenerator, BrownianIsHalfLaplacianFivePoint) {
  const Lattice lat = square(16, 2.0);
  const Generator g = build_generator_ito(brownian2(), MetricSpec::flat(), lat, 1.0);
  const double h2 = lat.spacing[0] * lat.spacing[0];
  for (std::size_t r : {std::size_t{0}, std::size_t{37}, lat.size() - 1}) {
    const auto m = lat.multi(r);
    EXPECT_NEAR(g.matrix.coeff(r, r), -2.0 / h2, 1e-12);
    int nnz = 0;
    for (SparseRM::InnerIterator it(g.matrix, r); it; ++it) ++nnz;
    EXPECT_EQ(nnz, 5);
    for (int d = 0; d < 2; ++d)
      for (int s : {1, -1}) {
        auto n = m;
        n[d] = (n[d] + s + 16) % 16;
        EXPECT_NEAR(g.matrix.coeff(r, lat.index(n)), 0.5 / h2, 1e-12);
      }
  }
}

TEST(ItoGenerator, LinearFunctionGivesDrift) {
  const Lattice lat = square(16, 2.0, Boundary::Absorbing);
  const auto sys = system2([](double x, double y) { return Eigen::Matrix2d{{1 + 0.2 * y, 0.1}, {0.0, 1 + x * x}}; },
                           [](double, double) { return Eigen::Vector2d(1.0, 0.0); });
  const Generator g = build_generator_ito(sys, MetricSpec::flat(), lat, 1.0);
  const Eigen::VectorXd f = sample_on(lat, [](const ChartPoint& u) { return u[0]; });
  const Eigen::VectorXd Af = g.apply(f);
  for (std::size_t r = 0; r < lat.size(); ++r) {
    const auto m = lat.multi(r);
    if (m[0] == 0 || m[0] == 15 || m[1] == 0 || m[1] == 15) continue;
    EXPECT_NEAR(Af[r], 1.0, 1e-12);
  }
}

TEST(ItoGenerator, QuadraticsGiveDiffusionCoefficients) {
  const Lattice lat = square(32, 2.0, Boundary::Absorbing);
  const auto sys = system2([](double x, double y) { return Eigen::Matrix2d{{1 + 0.2 * y, 0.3}, {0.0, 1 + 0.1 * x}}; },
                           [](double, double) { return Eigen::Vector2d::Zero().eval(); });
  const double rho = 0.7;
  const Generator g = build_generator_ito(sys, MetricSpec::flat(), lat, rho);
  const Eigen::VectorXd f = sample_on(lat, [](const ChartPoint& u) { return u[0] * u[1]; });
  const Eigen::VectorXd Af = g.apply(f);
  const std::size_t r = lat.index({10, 20, 0, 0});
  const ChartPoint u = lat.point(r);
  const Eigen::Matrix2d s{{1 + 0.2 * u[1], 0.3}, {0.0, 1 + 0.1 * u[0]}};
  // L(xy) = (rho/2) (a_12 + a_21) with a = sigma sigma^T.
  EXPECT_NEAR(Af[r], rho * (s * s.transpose())(0, 1), 1e-12);
}

TEST(ItoGenerator, NElongatedDerivativesOnCurvedFrame) {
  // f = y3 with N^3_1 = x2: e_1 f = -x2, so sigma = e_1 direction only gives (rho/2) e_1 e_1 y3 = 0
  // and drift b = e_1 gives -x2.
  MetricSpec spec = MetricSpec::flat();
  spec.N[0][0] = polynomial({{1.0, {0, 1, 0, 0}}});
  const Lattice lat = Lattice::box({0, 1, 2}, {-1, -1, -1}, {1, 1, 1}, {9, 9, 9}, Boundary::Absorbing);
  sde::SDESystem sys;
  sys.state_dim = 4;
  sys.noise_dim = 1;
  sys.sigma = [](double, const sde::State&) {
    sde::NoiseMatrix m = sde::NoiseMatrix::Zero(4, 1);
    m(0, 0) = 1.0;
    return m;
  };
  sys.drift = [](double, const sde::State&) {
    sde::State b = sde::State::Zero(4);
    b(0) = 1.0;
    return b;
  };
  const Generator g = build_generator_ito(sys, spec, lat, 1.0);
  const Eigen::VectorXd f = sample_on(lat, [](const ChartPoint& u) { return u[2]; });
  const Eigen::VectorXd Af = g.apply(f);
  const std::size_t r = lat.index({4, 6, 4, 0});
  EXPECT_NEAR(Af[r], -lat.point(r)[1], 1e-12);
  // e_1 e_1 (y3^2 / 2) = x2^2
  const Eigen::VectorXd q = sample_on(lat, [](const ChartPoint& u) { return 0.5 * u[2] * u[2]; });
  const ChartPoint u = lat.point(r);
  EXPECT_NEAR(g.apply(q)[r], 0.5 * u[1] * u[1] - u[1] * u[2], 1e-12);
}

TEST(ItoGenerator, DiscreteDualityWithAdjoint) {
  const Lattice lat = square(24, 4.0);
  const auto sys = system2(
      [](double x, double y) {
        return Eigen::Matrix2d{{1 + 0.3 * std::sin(kPi * x / 4), 0.2 * std::cos(kPi * y / 4)}, {0.0, 1.2}};
      },
      [](double x, double y) { return Eigen::Vector2d(0.5 * std::cos(kPi * y / 4), -0.3 * std::sin(kPi * x / 4)); });
  const Generator A = build_generator_ito(sys, MetricSpec::flat(), lat, 1.3);
  const Generator As = adjoint(A);
  EXPECT_EQ(As.kind, GeneratorKind::Adjoint);
  const Eigen::VectorXd f = random_field(lat.size(), 1), phi = random_field(lat.size(), 2);
  EXPECT_LT(duality_residual(A, As, f, phi, A.weight), 1e-8);
  // The adjoint annihilates nothing in general but preserves total mass.
  EXPECT_NEAR(As.apply(phi).sum(), 0.0, 1e-9 * phi.cwiseAbs().sum() / lat.spacing[0] / lat.spacing[0]);
}

TEST(StratonovichGenerator, ConstantSigmaMatchesIto) {
  const Lattice lat = square(16, 2.0);
  const auto sys = system2([](double, double) { return Eigen::Matrix2d{{1.0, 0.4}, {-0.2, 0.8}}; },
                           [](double x, double) { return Eigen::Vector2d(0.3, std::sin(kPi * x / 2)); });
  const Generator a = build_generator_ito(sys, MetricSpec::flat(), lat, 0.9);
  const Generator b = build_generator_strat(sys, MetricSpec::flat(), lat, 0.9);
  const Eigen::VectorXd f = random_field(lat.size(), 3);
  EXPECT_LT((a.apply(f) - b.apply(f)).cwiseAbs().maxCoeff(), 1e-12 * a.apply(f).cwiseAbs().maxCoeff());
}

TEST(StratonovichGenerator, MultiplicativeNoiseCorrection) {
  // 1-d sigma(u) = u: the Stratonovich generator carries an extra (rho/2) u d.
  const Lattice lat = Lattice::box({0}, {0.5}, {2.0}, {16}, Boundary::Absorbing);
  sde::SDESystem sys;
  sys.sigma = [](double, const sde::State& u) { return sde::NoiseMatrix::Constant(1, 1, u(0)); };
  sys.drift = [](double, const sde::State&) { return sde::State::Zero(1); };
  const double rho = 0.8;
  const Generator ito = build_generator_ito(sys, MetricSpec::flat(), lat, rho);
  const Generator strat = build_generator_strat(sys, MetricSpec::flat(), lat, rho);
  const double h = lat.spacing[0];
  for (std::size_t r = 1; r + 1 < lat.size(); ++r) {
    const double x = lat.point(r)[0];
    EXPECT_NEAR(strat.matrix.coeff(r, r + 1) - ito.matrix.coeff(r, r + 1), rho * x / 2 / (2 * h), 1e-7);
    EXPECT_NEAR(strat.matrix.coeff(r, r - 1) - ito.matrix.coeff(r, r - 1), -rho * x / 2 / (2 * h), 1e-7);
    EXPECT_NEAR(strat.matrix.coeff(r, r) - ito.matrix.coeff(r, r), 0.0, 1e-12);
  }
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(lat.size());
  EXPECT_LT(strat.apply(one).segment(1, lat.size() - 2).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(StratonovichGenerator, ConstantsAreAnnihilated) {
  const Lattice lat = square(16, 2.0);
  const auto sys = system2([](double x, double y) { return Eigen::Matrix2d{{1 + x * y, 0.3 * x}, {y, 1.0}}; },
                           [](double x, double) { return Eigen::Vector2d(x, 1.0); });
  const Generator g = build_generator_strat(sys, MetricSpec::flat(), lat, 1.0);
  EXPECT_LT(g.apply(Eigen::VectorXd::Constant(lat.size(), 3.0)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(BackwardEvolve, ConstantsUnchanged) {
  const Lattice lat = square(16, 4.0);
  const Generator g = build_backward_generator(conformal_spec(), [](const ChartPoint& u) {
    return Vec4(std::sin(kPi * u[1] / 4), 0.5, 0, 0);
  }, 1.0, lat);
  const Eigen::VectorXd f0 = Eigen::VectorXd::Constant(lat.size(), 2.5);
  const Eigen::VectorXd f = kolmogorov_backward_evolve(g, f0, 0.5, g.stable_dt());
  EXPECT_LT((f - f0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BackwardEvolve, HeatKernelWidening) {
  const Lattice lat = square(64, 6.0);
  const Generator g = build_generator_ito(brownian2(), MetricSpec::flat(), lat, 1.0);
  const double s0 = 1.0, tau = 1.0;
  const Eigen::VectorXd f0 = sample_on(lat, [&](const ChartPoint& u) { return gauss(u[0], u[1], s0); });
  const Eigen::VectorXd f = kolmogorov_backward_evolve(g, f0, tau, 0.9 * g.stable_dt());
  const Eigen::VectorXd exact = sample_on(lat, [&](const ChartPoint& u) { return gauss(u[0], u[1], s0 + tau); });
  EXPECT_LT((f - exact).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(BackwardEvolve, DriftOnlyFollowsCharacteristics) {
  const Lattice lat = square(32, 4.0, Boundary::Absorbing);
  const double b = 0.7;
  const Generator g = build_backward_generator(MetricSpec::flat(), [&](const ChartPoint&) { return Vec4(b, 0, 0, 0); },
                                               0.0, lat);
  const Eigen::VectorXd f0 = sample_on(lat, [](const ChartPoint& u) { return u[0]; });
  const double tau = 0.4;
  const Eigen::VectorXd f = kolmogorov_backward_evolve(g, f0, tau, 0.1);
  // Boundary influence travels two nodes per RK2 step at most; stay inside that.
  for (std::size_t r = 0; r < lat.size(); ++r) {
    const auto m = lat.multi(r);
    if (std::min(m[0], 31 - m[0]) < 9) continue;
    EXPECT_NEAR(f[r], f0[r] + b * tau, 1e-12);
  }
}

TEST(BackwardEvolve, StabilityViolationIsNumericalError) {
  const Lattice lat = square(32, 2.0);
  const Generator g = build_generator_ito(brownian2(), MetricSpec::flat(), lat, 1.0);
  const Eigen::VectorXd f0 = Eigen::VectorXd::Zero(lat.size());
  EXPECT_THROW(kolmogorov_backward_evolve(g, f0, 1.0, 2 * g.stable_dt()), NumericalError);
  EXPECT_NO_THROW(kolmogorov_backward_evolve(g, f0, 0.01, g.stable_dt()));
}

TEST(ForwardGenerator, WeightedDuality) {
  const Lattice lat = square(24, 4.0);
  const Generator B = build_backward_generator(conformal_spec(), [](const ChartPoint& u) {
    return Vec4(std::cos(kPi * u[1] / 4), 0.3 * std::sin(kPi * u[0] / 4), 0, 0);
  }, 1.1, lat);
  const Generator F = forward_generator(B);
  const Eigen::VectorXd f = random_field(lat.size(), 4), phi = random_field(lat.size(), 5);
  EXPECT_LT(duality_residual(B, F, f, phi, B.weight), 1e-8);
  // Not symmetric in the plain cell-volume product.
  const Eigen::VectorXd plain = Eigen::VectorXd::Constant(lat.size(), lat.cell_volume());
  EXPECT_GT(duality_residual(B, F, f, phi, plain), 1e-6);
}

TEST(ForwardGenerator, DivergenceFreeDriftReducesToLaplaceBeltrami) {
  // With A = 0 both generators are the weighted-symmetric Laplace-Beltrami.
  const Lattice lat = square(16, 4.0);
  const Generator B = build_backward_generator(conformal_spec(), nullptr, 1.0, lat);
  const Generator F = forward_generator(B);
  const Eigen::VectorXd f = random_field(lat.size(), 6);
  const Eigen::VectorXd d = B.apply(f) - F.apply(f);
  EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-9 * B.apply(f).cwiseAbs().maxCoeff());
}

TEST(FokkerPlanck, PointMassEquilibratesAndConservesMass) {
  const Lattice lat = square(16, 4.0);
  const MetricSpec spec = conformal_spec();
  const DensityGrid phi0 = point_mass(lat, metric_weight(spec, lat), {0.5, -0.5, 0, 0});
  EXPECT_NEAR(phi0.mass(), 1.0, 1e-14);
  const EvolveReport rep = fokker_planck_evolve(spec, nullptr, 1.0, phi0, 100.0, 0.05);
  for (double m : rep.mass_history) EXPECT_NEAR(m, 1.0, 1e-8);
  EXPECT_EQ(rep.clamped, 0);
  EXPECT_GE(rep.min_before_clamp, -1e-12);
  // Invariant density of the Laplace-Beltrami is uniform in the volume form.
  const double total = rep.density.weight.sum();
  EXPECT_LT((rep.density.values.array() - 1.0 / total).abs().maxCoeff(), 1e-6 / total);
}

TEST(FokkerPlanck, HeatKernelL1) {
  const Lattice lat = square(64, 4.0);
  const MetricSpec spec = MetricSpec::flat();
  DensityGrid phi0{lat, sample_on(lat, [](const ChartPoint& u) { return periodic_gauss(u[0], u[1], 1.0, 8.0); }),
                   metric_weight(spec, lat)};
  const EvolveReport rep = fokker_planck_evolve(spec, nullptr, 1.0, phi0, 1.0, 0.005);
  const Eigen::VectorXd exact =
      sample_on(lat, [](const ChartPoint& u) { return periodic_gauss(u[0], u[1], 2.0, 8.0); });
  EXPECT_LT(((rep.density.values - exact).cwiseAbs().array() * phi0.weight.array()).sum(), 1e-3);
  EXPECT_NEAR(rep.density.mass(), phi0.mass(), 1e-8);
}

TEST(FokkerPlanck, DriftTransportsMass) {
  // Constant drift shifts the centre of mass by A tau.
  const Lattice lat = square(64, 6.0);
  const MetricSpec spec = MetricSpec::flat();
  DensityGrid phi0{lat, sample_on(lat, [](const ChartPoint& u) { return gauss(u[0], u[1], 0.25); }),
                   metric_weight(spec, lat)};
  const EvolveReport rep =
      fokker_planck_evolve(spec, [](const ChartPoint&) { return Vec4(0.8, -0.4, 0, 0); }, 0.5, phi0, 1.0, 0.005);
  double mx = 0, my = 0;
  for (std::size_t r = 0; r < lat.size(); ++r) {
    const ChartPoint u = lat.point(r);
    mx += u[0] * rep.density.values[r] * rep.density.weight[r];
    my += u[1] * rep.density.values[r] * rep.density.weight[r];
  }
  EXPECT_NEAR(mx, 0.8, 1e-6);
  EXPECT_NEAR(my, -0.4, 1e-6);
}

TEST(FokkerPlanck, MassLossIsReported) {
  const Lattice lat = square(16, 4.0);
  Generator g = forward_generator(build_backward_generator(MetricSpec::flat(), nullptr, 1.0, lat));
  // A sink on one node breaks conservation.
  g.matrix.coeffRef(5, 5) -= 1.0;
  const DensityGrid phi0{lat, Eigen::VectorXd::Constant(lat.size(), 1.0 / 64), g.weight};
  EXPECT_THROW(evolve_density(g, phi0, 0.5, 0.01), NumericalError);
}

TEST(FokkerPlanck, AgreesWithMonteCarlo) {
  const Lattice lat = square(64, 4.0);
  const std::vector<sde::SDESystem> battery{
      brownian2(),
      system2([](double, double) { return Eigen::Matrix2d{{1.0, 0.0}, {0.0, 0.7}}; },
              [](double, double) { return Eigen::Vector2d(0.6, -0.3); }),
      system2(
          [](double x, double y) {
            return Eigen::Matrix2d{{1 + 0.3 * std::sin(kPi * x / 4), 0.0}, {0.0, 1 + 0.2 * std::cos(kPi * y / 4)}};
          },
          [](double x, double y) { return Eigen::Vector2d(0.5 * std::cos(kPi * y / 4), -0.3 * std::sin(kPi * x / 4)); }),
  };
  for (std::size_t k = 0; k < battery.size(); ++k) {
    const McComparison c = compare_with_monte_carlo(battery[k], lat, 1.0, 1.0, 100000, 11 + k, 16, 0.01);
    EXPECT_LT(c.l1, 0.05) << k;
    EXPECT_LT(c.mass_error, 1e-8) << k;
    EXPECT_GE(c.min_before_clamp, -1e-12) << k;
  }
}

TEST(HDiffusion, FlatIsHeatEquation) {
  const Lattice lat = square(64, 6.0);
  const double rho = 1.5, tau = 0.6;
  const Eigen::VectorXd f0 = sample_on(lat, [](const ChartPoint& u) { return gauss(u[0], u[1], 1.0); });
  const Eigen::VectorXd f = h_diffusion_solve(lat, ScalarField::constant(0.0), f0, tau, rho);
  const Eigen::VectorXd exact = sample_on(lat, [&](const ChartPoint& u) { return gauss(u[0], u[1], 1.0 + rho * tau); });
  EXPECT_LT((f - exact).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(HDiffusion, ConstantsUnchanged) {
  const Lattice lat = square(16, 4.0);
  const ScalarField psi = trigonometric(TrigKind::Sin, 0.5, {kPi / 4, kPi / 4, 0, 0}, 0, 0);
  const Eigen::VectorXd f0 = Eigen::VectorXd::Constant(lat.size(), -1.25);
  EXPECT_LT((h_diffusion_solve(lat, psi, f0, 1.0, 1.0) - f0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(HDiffusion, ConstantPsiRescalesTime) {
  const Lattice lat = square(32, 6.0);
  const double c = 0.7, tau = 1.0, rho = 1.0, dt = 0.01;
  const Eigen::VectorXd f0 = sample_on(lat, [](const ChartPoint& u) { return gauss(u[0], u[1], 1.0); });
  const Eigen::VectorXd a = h_diffusion_solve(lat, ScalarField::constant(c), f0, tau, rho, dt);
  const Eigen::VectorXd b = h_diffusion_solve(lat, ScalarField::constant(0.0), f0, tau * std::exp(-c), rho,
                                              dt * std::exp(-c));
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::VectorXd exact =
      sample_on(lat, [&](const ChartPoint& u) { return gauss(u[0], u[1], 1.0 + rho * tau * std::exp(-c)); });
  EXPECT_LT((a - exact).cwiseAbs().maxCoeff(), 5e-3);
}

TEST(HDiffusion, RejectsWrongLattice) {
  const Lattice lat = Lattice::box({0, 2}, {0, 0}, {1, 1}, {8, 8});
  EXPECT_THROW(h_diffusion_solve(lat, ScalarField(), Eigen::VectorXd::Zero(64), 1.0, 1.0), ConfigError);
}

TEST(VelocityLaplacian, AnnihilatesConstantsInside) {
  VelocityLattice vl;
  vl.n = 10;
  const Generator g = build_velocity_laplacian(vl);
  const Eigen::VectorXd Lc = g.apply(Eigen::VectorXd::Ones(vl.size()));
  // Interior nodes away from the Dirichlet data see only constants.
  for (std::size_t r = 0; r < vl.size(); ++r) {
    const Eigen::Vector3d v = vl.velocity(r);
    if (v.cwiseAbs().maxCoeff() < vl.hi - 1.5 * vl.spacing()) EXPECT_NEAR(Lc[r], 0.0, 1e-10);
  }
}

TEST(VelocityLaplacian, SelfAdjointInHyperbolicVolume) {
  for (int dims : {1, 3}) {
    VelocityLattice vl;
    vl.dims = dims;
    vl.lo = -2.0;
    vl.hi = 1.5;
    vl.n = 12;
    const Generator g = build_velocity_laplacian(vl);
    const Eigen::VectorXd f = random_field(vl.size(), 7), h = random_field(vl.size(), 8);
    EXPECT_LT(duality_residual(g, g, f, h, g.weight), 1e-8) << dims;
    const Eigen::VectorXd plain = Eigen::VectorXd::Ones(vl.size());
    EXPECT_GT(duality_residual(g, g, f, h, plain), 1e-4) << dims;
  }
}

TEST(VelocityLaplacian, OneDimensionalReduction) {
  // (1/sqrt h) d (sqrt h h^{-1} d f) = v_t d (v_t d f) with v_t = sqrt(1 + v^2).
  VelocityLattice vl;
  vl.dims = 1;
  vl.lo = -1.0;
  vl.hi = 1.0;
  double prev = 0;
  for (int n : {41, 81}) {
    vl.n = n;
    const Generator g = build_velocity_laplacian(vl);
    Eigen::VectorXd f(vl.size());
    for (std::size_t r = 0; r < vl.size(); ++r) f[r] = std::cos(vl.velocity(r)(0));
    const Eigen::VectorXd Lf = g.apply(f);
    double err = 0;
    for (std::size_t r = 1; r + 1 < vl.size(); ++r) {
      const double v = vl.velocity(r)(0), vt = std::sqrt(1 + v * v);
      // v_t (v_t' f' + v_t f'') with v_t' = v / v_t
      err = std::max(err, std::abs(Lf[r] - vt * (-(v / vt) * std::sin(v) - vt * std::cos(v))));
    }
    if (prev > 0) EXPECT_GT(prev / err, 3.5);
    prev = err;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(VelocityLaplacian, SmallVelocityLimitIsFlatLaplacian) {
  for (double half : {0.02, 0.01}) {
    VelocityLattice vl;
    vl.lo = -half;
    vl.hi = half;
    vl.n = 9;
    const Generator g = build_velocity_laplacian(vl);
    const double h2 = vl.spacing() * vl.spacing();
    double dev = 0;
    for (std::size_t r = 0; r < vl.size(); ++r)
      for (SparseRM::InnerIterator it(g.matrix, r); it; ++it) {
        const long d = std::abs(static_cast<long>(it.col()) - static_cast<long>(r));
        double flat = 0;
        if (it.col() == static_cast<long>(r))
          flat = -6.0 / h2;
        else if (d == 1 || d == 9 || d == 81)
          flat = 1.0 / h2;
        dev = std::max(dev, std::abs(it.value() - flat) * h2);
      }
    // |v|^2 <= 3 half^2
    EXPECT_LT(dev, 3 * 3 * half * half) << half;
    EXPECT_GT(dev, 0.0);
  }
}

TEST(VelocityLaplacian, RejectsBadLattices) {
  VelocityLattice vl;
  vl.hi = std::numeric_limits<double>::infinity();
  EXPECT_THROW(build_velocity_laplacian(vl), ConfigError);
  vl.hi = 1.0;
  vl.n = 4;
  EXPECT_THROW(build_velocity_laplacian(vl), ConfigError);
}
