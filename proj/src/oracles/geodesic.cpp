#include "nhdiff/oracles.hpp"

namespace nhdiff::oracles {

namespace {
struct Deriv {
  Vec4 dx;
  Vec4 dv;
};

Deriv rhs(const geometry::MetricSpec& spec, const Vec4& x, const Vec4& v) {
  const ChartPoint u{x(0), x(1), x(2), x(3)};
  const Tensor3 C = coordinate_christoffel(spec, u);
  Deriv d{v, Vec4::Zero()};
  for (int r = 0; r < 4; ++r) d.dv(r) = -v.dot(C[r] * v);
  return d;
}
}  // namespace

GeodesicState rk4_geodesic(const geometry::MetricSpec& spec, GeodesicState s, double tau, int steps) {
  const double h = tau / steps;
  for (int n = 0; n < steps; ++n) {
    const Deriv k1 = rhs(spec, s.x, s.xdot);
    const Deriv k2 = rhs(spec, s.x + 0.5 * h * k1.dx, s.xdot + 0.5 * h * k1.dv);
    const Deriv k3 = rhs(spec, s.x + 0.5 * h * k2.dx, s.xdot + 0.5 * h * k2.dv);
    const Deriv k4 = rhs(spec, s.x + h * k3.dx, s.xdot + h * k3.dv);
    s.x += h / 6.0 * (k1.dx + 2 * k2.dx + 2 * k3.dx + k4.dx);
    s.xdot += h / 6.0 * (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv);
  }
  return s;
}

}  // namespace nhdiff::oracles
