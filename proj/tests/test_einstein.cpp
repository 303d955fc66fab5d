// Residual formulas and generated families against the Ricci tensor of the
// canonical d-connection computed by differences (oracles::frame_ricci).
#include <gtest/gtest.h>

#include <cmath>

#include "nhdiff/ansatz.hpp"
#include "nhdiff/oracles.hpp"

using namespace nhdiff;
using namespace nhdiff::ansatz;

namespace {

Grid cube(int n) { return {{Axis::span(0, 1, n), Axis::span(0, 1, n), Axis::span(0, 1, n)}}; }

FieldDerivatives jets_of(const ScalarField& f, const Grid& g, GridField& values) {
  FieldDerivatives d;
  values.resize(g.size());
  d.t.resize(g.size());
  d.tt.resize(g.size());
  for (int a = 0; a < 2; ++a) {
    d.x[a].resize(g.size());
    d.xt[a].resize(g.size());
  }
  for (int i = 0; i < g.axes[0].n; ++i)
    for (int j = 0; j < g.axes[1].n; ++j)
      for (int k = 0; k < g.axes[2].n; ++k) {
        const std::size_t p = g.index(i, j, k);
        const Jet J = f.jet(g.point(i, j, k));
        values[p] = J.v;
        d.t[p] = J.g(2);
        d.tt[p] = J.h(2, 2);
        for (int a = 0; a < 2; ++a) {
          d.x[a][p] = J.g(a);
          d.xt[a][p] = J.h(a, 2);
        }
      }
  return d;
}

// Richardson-extrapolated over steps 4e-3 and 2e-3.
Mat4 canonical_ricci(const geometry::MetricSpec& spec, const ChartPoint& u) {
  auto conn = [](const geometry::MetricSample& s) { return geometry::canonical_dconnection(s); };
  const Mat4 coarse = oracles::frame_ricci(spec, conn, u, 4e-3);
  const Mat4 fine = oracles::frame_ricci(spec, conn, u, 2e-3);
  return (4 * fine - coarse) / 3;
}

}  // namespace

TEST(EinsteinSystem, ResidualsAreRicciComponentsForArbitraryData) {
  geometry::MetricSpec spec;
  spec.h3 = sum({ScalarField::constant(-1.2), trigonometric(TrigKind::Sin, -0.3, {1, 0, 2, 0}, 0, 0),
                 polynomial({{0.2, {0, 1, 1, 0}}})});
  spec.h4 = sum({ScalarField::constant(1.5), trigonometric(TrigKind::Cos, 0.4, {0, 1, -1, 0}, 0, 0),
                 polynomial({{0.3, {1, 0, 2, 0}}})});
  spec.N[0][0] = trigonometric(TrigKind::Sin, 0.3, {0, 1, 1, 0}, 0, 0);
  spec.N[0][1] = polynomial({{0.2, {1, 0, 1, 0}}});
  spec.N[1][0] = sum({polynomial({{0.5, {0, 1, 0, 0}}}), trigonometric(TrigKind::Sin, 0.4, {0.5, 0, 1, 0}, 1, 0)});
  spec.N[1][1] = polynomial({{-0.3, {0, 0, 2, 0}}, {0.1, {1, 0, 0, 0}}});

  const Grid grid = cube(5);
  AnsatzSolution sol;
  sol.grid = grid;
  AnsatzSolution::Companions c;
  c.h3 = jets_of(spec.h3, grid, sol.h3);
  c.h4 = jets_of(spec.h4, grid, sol.h4);
  for (int a = 0; a < 2; ++a) {
    c.w[a] = jets_of(spec.N[0][a], grid, sol.w[a]);
    c.n[a] = jets_of(spec.N[1][a], grid, sol.n[a]);
  }
  sol.companions = c;
  GeneratingData gen;  // upsilon2 = 0, so r2 is R^3_3 itself
  const auto rep = residuals(sol, gen);

  for (auto [i, j, k] : {std::array<int, 3>{1, 2, 3}, {3, 1, 2}, {2, 2, 1}}) {
    const ChartPoint u = grid.point(i, j, k);
    const std::size_t p = grid.index(i, j, k);
    const Mat4 R = canonical_ricci(spec, u);
    EXPECT_NEAR(R(2, 2) / sol.h3[p], rep.r2[p], 1e-6);
    EXPECT_NEAR(R(3, 3) / sol.h4[p], rep.r2[p], 1e-6);
    for (int a = 0; a < 2; ++a) {
      EXPECT_NEAR(R(a, 2), rep.r3[a][p], 1e-6);
      EXPECT_NEAR(-R(a, 3), rep.r4[a][p], 1e-6);
      EXPECT_NEAR(R(2, a), 0.0, 1e-6);
      EXPECT_NEAR(R(3, a), 0.0, 1e-6);
    }
  }
}

TEST(EinsteinSystem, FamilyASolvesTheEquations) {
  GeneratingData g;
  g.phi = sum({polynomial({{1.0, {0, 0, 1, 0}}}),
               product({trigonometric(TrigKind::Sin, 0.1, {1, 0, 0, 0}, 0, 0),
                        trigonometric(TrigKind::Sin, 1.0, {0, 1, 0, 0}, 0, 0)})});
  g.upsilon2 = sum({ScalarField::constant(1.0), polynomial({{0.2, {1, 0, 0, 0}}})});
  g.h4_0 = ScalarField::constant(20.0);
  g.n1 = {polynomial({{1.0, {0, 1, 0, 0}}}), ScalarField()};
  g.n2 = {ScalarField::constant(0.5), trigonometric(TrigKind::Cos, 0.3, {1, 1, 0, 0}, 0, 0)};
  const auto sol = generate_family_A(g, cube(9));
  const auto spec = assemble_metric(Family::A, g, sol);
  for (ChartPoint u : {ChartPoint{0.3, 0.4, 0.5, 0.0}, ChartPoint{0.7, 0.2, 0.8, 0.0}}) {
    const Mat4 R = canonical_ricci(spec, u);
    const double ups = g.upsilon2(u);
    EXPECT_NEAR(R(2, 2) / spec.h3(u), -ups, 1e-5);
    EXPECT_NEAR(R(3, 3) / spec.h4(u), -ups, 1e-5);
    for (int a = 0; a < 2; ++a) {
      EXPECT_NEAR(R(a, 2), 0.0, 1e-5);
      EXPECT_NEAR(R(a, 3), 0.0, 1e-5);
    }
  }
}

TEST(EinsteinSystem, VacuumFamilySolvesTheEquations) {
  GeneratingData g;
  g.h3 = sum({ScalarField::constant(-1.0), trigonometric(TrigKind::Sin, 0.3, {1, 1, 2, 0}, 0, 0)});
  g.h4_0 = sum({ScalarField::constant(1.3), polynomial({{0.2, {1, 1, 0, 0}}})});
  g.w = {trigonometric(TrigKind::Cos, 0.2, {0, 1, 1, 0}, 0, 0), polynomial({{0.4, {1, 0, 1, 0}}})};
  g.n1 = {ScalarField(), polynomial({{0.5, {1, 0, 0, 0}}})};
  g.n2 = {ScalarField::constant(0.7), polynomial({{0.3, {0, 1, 0, 0}}})};
  const auto sol = generate_family_vacuum(g, cube(9));
  const auto spec = assemble_metric(Family::Vacuum, g, sol);
  for (ChartPoint u : {ChartPoint{0.3, 0.4, 0.5, 0.0}, ChartPoint{0.6, 0.8, 0.2, 0.0}}) {
    const Mat4 R = canonical_ricci(spec, u);
    EXPECT_NEAR(R(2, 2), 0.0, 1e-5);
    EXPECT_NEAR(R(3, 3), 0.0, 1e-5);
    for (int a = 0; a < 2; ++a) {
      EXPECT_NEAR(R(a, 2), 0.0, 1e-5);
      EXPECT_NEAR(R(a, 3), 0.0, 1e-5);
    }
  }
}
