#pragma once

// Reference computations kept independent of the production code paths.
// Used by the unit tests and by the named acceptance checks.

#include <cstdint>
#include <functional>
#include <vector>

#include "nhdiff/geometry.hpp"

namespace nhdiff::oracles {

// Coordinate metric assembled directly from the spec's field values.
Mat4 coordinate_metric(const geometry::MetricSpec& spec, const ChartPoint& u);

// Christoffel symbols C[r](m, n) = Gamma^r_{mn} of the coordinate metric by central differences.
Tensor3 coordinate_christoffel(const geometry::MetricSpec& spec, const ChartPoint& u, double h = 1e-5);

// Coordinate Christoffels transported to the N-adapted basis:
// G^c_ab = theta^c_m E_b^n (d_n E_a^m + E_a^l Gamma^m_{ln}).
Tensor3 levi_civita_adapted(const geometry::MetricSpec& spec, const ChartPoint& u, double h = 1e-5);

// Random smooth specs on [0,1]^4; coefficients stay well away from zero.
geometry::MetricSpec random_diagonal_spec(std::uint64_t seed, geometry::DerivativeMode mode);
geometry::MetricSpec random_offdiagonal_spec(std::uint64_t seed, geometry::DerivativeMode mode);
ChartPoint random_point(std::uint64_t seed);

// Ricci tensor Ric(d, b) = R^a_{bad} of a frame connection, with
// R^a_{bcd} = e_c G^a_bd - e_d G^a_bc + G^e_bd G^a_ec - G^e_bc G^a_ed - w^e_cd G^a_be
// and frame derivatives of G by central differences of step h.
using FrameConnection = std::function<Tensor3(const geometry::MetricSample&)>;
Mat4 frame_ricci(const geometry::MetricSpec& spec, const FrameConnection& connection, const ChartPoint& u,
                 double h = 2e-3);

// Geodesic x'' = -Gamma^r_{mn} x'^m x'^n by classical RK4 on (x, x').
struct GeodesicState {
  Vec4 x;
  Vec4 xdot;
};
GeodesicState rk4_geodesic(const geometry::MetricSpec& spec, GeodesicState s0, double tau, int steps);

}  // namespace nhdiff::oracles
