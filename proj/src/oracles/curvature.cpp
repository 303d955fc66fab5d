#include "nhdiff/oracles.hpp"

namespace nhdiff::oracles {

Mat4 frame_ricci(const geometry::MetricSpec& spec, const FrameConnection& connection, const ChartPoint& u,
                 double h) {
  const auto s0 = geometry::sample(spec, u);
  const Tensor3 G = connection(s0);
  const Tensor3 w = geometry::anholonomy(s0);
  const Mat4 E = geometry::n_adapted_frame(s0).E;
  std::array<Tensor3, 4> dG;
  for (int m = 0; m < 4; ++m) {
    ChartPoint p = u, q = u;
    p[m] += h;
    q[m] -= h;
    const Tensor3 a = connection(geometry::sample(spec, p)), b = connection(geometry::sample(spec, q));
    for (int c = 0; c < 4; ++c) dG[m][c] = (a[c] - b[c]) / (2 * h);
  }
  // eG(c, a, b, d) = e_c G^a_bd
  auto eG = [&](int c, int a, int b, int d) {
    double r = 0.0;
    for (int m = 0; m < 4; ++m) r += E(c, m) * dG[m][a](b, d);
    return r;
  };
  auto R = [&](int a, int b, int c, int d) {
    double r = eG(c, a, b, d) - eG(d, a, b, c);
    for (int e = 0; e < 4; ++e)
      r += G[e](b, d) * G[a](e, c) - G[e](b, c) * G[a](e, d) - w[e](c, d) * G[a](b, e);
    return r;
  };
  Mat4 ric = Mat4::Zero();
  for (int d = 0; d < 4; ++d)
    for (int b = 0; b < 4; ++b)
      for (int a = 0; a < 4; ++a) ric(d, b) += R(a, b, a, d);
  return ric;
}

}  // namespace nhdiff::oracles
