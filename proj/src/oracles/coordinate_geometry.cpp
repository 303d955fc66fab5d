#include <cmath>
#include <random>

#include "nhdiff/oracles.hpp"

namespace nhdiff::oracles {

using geometry::MetricSpec;

Mat4 coordinate_metric(const MetricSpec& spec, const ChartPoint& u) {
  const double gd[2] = {spec.g1(u), spec.g2(u)};
  const double hd[2] = {spec.h3(u), spec.h4(u)};
  double N[2][2];
  for (int a = 0; a < 2; ++a)
    for (int k = 0; k < 2; ++k) N[a][k] = spec.N[a][k](u);
  Mat4 g = Mat4::Zero();
  for (int i = 0; i < 2; ++i) {
    g(i, i) += gd[i];
    for (int j = 0; j < 2; ++j)
      for (int a = 0; a < 2; ++a) g(i, j) += N[a][i] * N[a][j] * hd[a];
    for (int a = 0; a < 2; ++a) {
      g(i, 2 + a) = N[a][i] * hd[a];
      g(2 + a, i) = N[a][i] * hd[a];
    }
  }
  g(2, 2) = hd[0];
  g(3, 3) = hd[1];
  return g;
}

Tensor3 coordinate_christoffel(const MetricSpec& spec, const ChartPoint& u, double h) {
  std::array<Mat4, 4> dg;  // dg[n] = d_n g
  for (int n = 0; n < 4; ++n) {
    ChartPoint p = u, q = u;
    p[n] += h;
    q[n] -= h;
    dg[n] = (coordinate_metric(spec, p) - coordinate_metric(spec, q)) / (2 * h);
  }
  const Mat4 gi = coordinate_metric(spec, u).inverse();
  Tensor3 C;
  for (int r = 0; r < 4; ++r) {
    C[r].setZero();
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n)
        for (int s = 0; s < 4; ++s)
          C[r](m, n) += 0.5 * gi(r, s) * (dg[m](s, n) + dg[n](s, m) - dg[s](m, n));
  }
  return C;
}

namespace {
Mat4 frame_rows(const MetricSpec& spec, const ChartPoint& u) {
  Mat4 E = Mat4::Identity();
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 2; ++a) E(i, 2 + a) = -spec.N[a][i](u);
  return E;
}
}  // namespace

Tensor3 levi_civita_adapted(const MetricSpec& spec, const ChartPoint& u, double h) {
  const Tensor3 C = coordinate_christoffel(spec, u, h);
  const Mat4 E = frame_rows(spec, u);
  const Mat4 theta = E.inverse();  // theta(m, c): coordinate basis -> frame components
  std::array<Mat4, 4> dE;
  for (int n = 0; n < 4; ++n) {
    ChartPoint p = u, q = u;
    p[n] += h;
    q[n] -= h;
    dE[n] = (frame_rows(spec, p) - frame_rows(spec, q)) / (2 * h);
  }
  Tensor3 G;
  for (int c = 0; c < 4; ++c) G[c].setZero();
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      Vec4 v = Vec4::Zero();  // coordinate components of D_{e_b} e_a
      for (int m = 0; m < 4; ++m)
        for (int n = 0; n < 4; ++n) {
          double t = dE[n](a, m);
          for (int l = 0; l < 4; ++l) t += E(a, l) * C[m](l, n);
          v(m) += E(b, n) * t;
        }
      const Vec4 comps = theta.transpose() * v;
      for (int c = 0; c < 4; ++c) G[c](a, b) = comps(c);
    }
  return G;
}

namespace {

ScalarField random_smooth(std::mt19937_64& rng, double base, double amp, bool all_coords) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<ScalarField> terms{ScalarField::constant(base)};
  for (int t = 0; t < 3; ++t) {
    Vec4 k;
    for (int m = 0; m < 4; ++m) k(m) = all_coords || m < 2 ? 2.0 * U(rng) : 0.0;
    terms.push_back(trigonometric(TrigKind::Sin, amp * U(rng), k, 3.0 * U(rng), 0.0));
  }
  return sum(std::move(terms));
}

ScalarField to_mode(const ScalarField& f, geometry::DerivativeMode mode) {
  if (mode == geometry::DerivativeMode::Analytic || f.is_constant()) return f;
  return ScalarField::from_value([f](const ChartPoint& u) { return f(u); });
}

}  // namespace

MetricSpec random_diagonal_spec(std::uint64_t seed, geometry::DerivativeMode mode) {
  std::mt19937_64 rng(seed);
  MetricSpec s;
  s.mode = mode;
  s.g1 = to_mode(random_smooth(rng, 1.5, 0.3, true), mode);
  s.g2 = to_mode(random_smooth(rng, 2.0, 0.3, true), mode);
  s.h3 = to_mode(random_smooth(rng, -1.5, 0.3, true), mode);
  s.h4 = to_mode(random_smooth(rng, 1.2, 0.2, true), mode);
  return s;
}

MetricSpec random_offdiagonal_spec(std::uint64_t seed, geometry::DerivativeMode mode) {
  MetricSpec s = random_diagonal_spec(seed, mode);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& row : s.N)
    for (auto& f : row) f = to_mode(random_smooth(rng, 0.0, 0.5, true), mode);
  return s;
}

ChartPoint random_point(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 17);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  return {U(rng), U(rng), U(rng), U(rng)};
}

}  // namespace nhdiff::oracles
