#include <gtest/gtest.h>

#include <cmath>

#include "nhdiff/sde.hpp"
#include "nhdiff/stats.hpp"

using namespace nhdiff;
using namespace nhdiff::sde;

TEST(Rng, PhiloxKnownAnswers) {
  // Reference vectors of the Random123 distribution (philox4x32, 10 rounds).
  auto a = rng::philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(a[0], 0x6627e8d5u);
  EXPECT_EQ(a[1], 0xe169c58du);
  EXPECT_EQ(a[2], 0xbc57ac4cu);
  EXPECT_EQ(a[3], 0x9b00dbd8u);
  auto b = rng::philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(b[0], 0x408f276du);
  EXPECT_EQ(b[1], 0x41c83b0eu);
  EXPECT_EQ(b[2], 0xa20bc7c6u);
  EXPECT_EQ(b[3], 0x6d5451fdu);
  auto c = rng::philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(c[0], 0xd16cfe09u);
  EXPECT_EQ(c[1], 0x94fdccebu);
  EXPECT_EQ(c[2], 0x5001e420u);
  EXPECT_EQ(c[3], 0x24126ea1u);
}

TEST(Rng, DrawsAreAddressable) {
  const rng::CounterRng g(42);
  const double a = g.normal(7, 3, 1);
  (void)g.normal(1, 1, 1);
  EXPECT_EQ(a, g.normal(7, 3, 1));
  EXPECT_NE(a, g.normal(7, 3, 0));
  EXPECT_NE(a, g.normal(8, 3, 1));
  EXPECT_NE(a, rng::CounterRng(43).normal(7, 3, 1));
}

TEST(Wiener, IncrementStatistics) {
  WienerConfig cfg{0.7, 2, 11, 0.05, 50000};
  const Eigen::MatrixXd dW = sample_wiener(cfg, 0);
  std::vector<double> x(dW.data(), dW.data() + dW.size());
  const auto m = stats::moments(x);
  const double var = cfg.rho * cfg.dt;
  EXPECT_LT(std::abs(m.mean), 3 * std::sqrt(var / m.n));
  EXPECT_LT(std::abs(m.variance - var), 3 * m.variance_stderr);
}

TEST(Wiener, ComponentsAreUncorrelated) {
  WienerConfig cfg{1.0, 2, 5, 1.0, 40000};
  const Eigen::MatrixXd dW = sample_wiener(cfg, 3);
  std::vector<double> a(cfg.steps), b(cfg.steps);
  for (long i = 0; i < cfg.steps; ++i) {
    a[i] = dW(i, 0);
    b[i] = dW(i, 1);
  }
  EXPECT_LT(std::abs(stats::covariance(a, b)), 3.0 / std::sqrt(cfg.steps));
}

TEST(Wiener, RejectsBadConfig) {
  WienerConfig cfg;
  cfg.dt = 0.0;
  EXPECT_THROW(cfg.validate(), nhdiff::ConfigError);
  cfg = {};
  cfg.rho = -1;
  EXPECT_THROW(cfg.validate(), nhdiff::ConfigError);
}

namespace {

SDESystem gbm(Interpretation kind) {
  SDESystem s;
  s.interpretation = kind;
  s.sigma = [](double, const State& u) {
    NoiseMatrix m(1, 1);
    m(0, 0) = u(0);
    return m;
  };
  s.drift = [](double, const State&) { return State::Zero(1); };
  return s;
}

IntegrationOptions options(long paths, long steps, double tau, std::uint64_t seed, double rho = 1.0) {
  IntegrationOptions o;
  o.wiener = {rho, 1, seed, tau / steps, steps};
  o.paths = paths;
  o.u0 = State::Constant(1, 1.0);
  return o;
}

std::vector<double> column(const PathEnsemble& e, int c) {
  std::vector<double> v(e.paths);
  for (long p = 0; p < e.paths; ++p) v[p] = e.terminal_at(p, c);
  return v;
}

}  // namespace

TEST(Sde, NoiseInducedDriftOfLinearNoise) {
  const SDESystem s = gbm(Interpretation::Stratonovich);
  const State u = State::Constant(1, 2.0);
  EXPECT_NEAR(noise_induced_drift(s, 0.5, 0.0, u)(0), 0.25 * 2.0, 1e-9);
  const SDESystem ito = ito_equivalent(s, 0.5);
  EXPECT_NEAR(ito.drift(0.0, u)(0), 0.5, 1e-9);
  EXPECT_NEAR(stratonovich_equivalent(ito, 0.5).drift(0.0, u)(0), 0.0, 1e-9);
}

TEST(Sde, StratonovichAndItoGeometricBrownianMotion) {
  const double tau = 1.0, rho = 1.0;
  const auto strat = integrate_stratonovich(gbm(Interpretation::Stratonovich), options(20000, 100, tau, 1));
  const auto ito = integrate_ito(ito_equivalent(gbm(Interpretation::Stratonovich), rho), options(20000, 100, tau, 2));
  const auto ms = stats::moments(column(strat, 0));
  const auto mi = stats::moments(column(ito, 0));
  const double exact_mean = std::exp(rho * tau / 2);
  EXPECT_LT(std::abs(ms.mean - exact_mean), 3 * ms.mean_stderr + 0.01);
  EXPECT_LT(std::abs(mi.mean - exact_mean), 3 * mi.mean_stderr + 0.01);
  EXPECT_LT(std::abs(ms.mean - mi.mean), 3 * std::hypot(ms.mean_stderr, mi.mean_stderr));
  EXPECT_LT(std::abs(ms.variance - mi.variance), 3 * std::hypot(ms.variance_stderr, mi.variance_stderr));
}

TEST(Sde, PathwiseHeunMatchesExactGbm) {
  // Stratonovich dU = U o dW has U = exp(W) pathwise.
  const long steps = 2000;
  auto opt = options(4, steps, 1.0, 9);
  const auto ens = integrate_stratonovich(gbm(Interpretation::Stratonovich), opt);
  for (long p = 0; p < 4; ++p) {
    const Eigen::MatrixXd dW = sample_wiener(opt.wiener, p);
    EXPECT_NEAR(ens.terminal_at(p, 0), std::exp(dW.sum()), 5e-3 * std::exp(dW.sum()));
  }
}

TEST(Sde, ZeroNoiseConvergenceOrders) {
  // du = -u dt: Euler first order, Heun second order.
  SDESystem s;
  s.sigma = [](double, const State&) { return NoiseMatrix::Zero(1, 1); };
  s.drift = [](double, const State& u) -> State { return -u; };
  std::vector<double> h, e_em, e_heun;
  for (long steps : {50, 100, 200, 400}) {
    auto o = options(1, steps, 1.0, 0, 0.0);
    s.interpretation = Interpretation::Ito;
    const double em = integrate_ito(s, o).terminal_at(0, 0);
    s.interpretation = Interpretation::Stratonovich;
    const double hn = integrate_stratonovich(s, o).terminal_at(0, 0);
    h.push_back(1.0 / steps);
    e_em.push_back(std::abs(em - std::exp(-1.0)));
    e_heun.push_back(std::abs(hn - std::exp(-1.0)));
  }
  EXPECT_NEAR(stats::observed_order(h, e_em), 1.0, 0.1);
  EXPECT_NEAR(stats::observed_order(h, e_heun), 2.0, 0.1);
}

TEST(Sde, ReproducibleAcrossThreadCounts) {
  auto o = options(257, 40, 1.0, 77);
  o.record_every = 10;
  o.record_paths = 3;
  const auto a = integrate_stratonovich(gbm(Interpretation::Stratonovich), o);
  o.threads = 4;
  const auto b = integrate_stratonovich(gbm(Interpretation::Stratonovich), o);
  EXPECT_EQ(a.terminal, b.terminal);
  EXPECT_EQ(a.trajectories, b.trajectories);
  EXPECT_EQ(a.records_per_path(), 5);
  EXPECT_EQ(a.trajectories[0], 1.0);
}

TEST(Sde, InterpretationMismatchIsRejected) {
  EXPECT_THROW(integrate_ito(gbm(Interpretation::Stratonovich), options(1, 1, 1, 0)), nhdiff::ConfigError);
  EXPECT_THROW(integrate_stratonovich(gbm(Interpretation::Ito), options(1, 1, 1, 0)), nhdiff::ConfigError);
}
