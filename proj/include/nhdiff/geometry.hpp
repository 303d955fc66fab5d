#pragma once

#include <array>
#include <optional>
#include <string>

#include "nhdiff/field.hpp"
#include "nhdiff/types.hpp"

namespace nhdiff::geometry {

enum class DerivativeMode { Analytic, FiniteDifference };

// d-metric g = g_i dx^i dx^i + h_a e^a e^a with e^a = dy^a + N^a_k dx^k.
struct MetricSpec {
  ScalarField g1 = ScalarField::constant(1.0);
  ScalarField g2 = ScalarField::constant(1.0);
  ScalarField h3 = ScalarField::constant(-1.0);
  ScalarField h4 = ScalarField::constant(1.0);
  // N[a][k] is N^{a+3}_{k+1}.
  std::array<std::array<ScalarField, 2>, 2> N;
  std::array<int, 4> signature{1, 1, -1, 1};
  DerivativeMode mode = DerivativeMode::Analytic;

  static MetricSpec flat(std::array<int, 4> signature = {1, 1, -1, 1});
  // Throws ConfigError when analytic mode is requested for a field without a jet.
  void validate() const;
};

// Coefficients and first partials at one point.
struct MetricSample {
  ChartPoint u{};
  Vec4 d = Vec4::Zero();                 // (g1, g2, h3, h4)
  Mat4 dd = Mat4::Zero();                // dd(k, m) = d_m of d(k)
  Eigen::Matrix2d N = Eigen::Matrix2d::Zero();  // N(a, k)
  std::array<Eigen::Matrix2d, 4> dN{};   // dN[m](a, k)
};

// Evaluates the spec; throws NumericalError when |det g| or |det h| < 1e-14.
MetricSample sample(const MetricSpec& spec, const ChartPoint& u);

// Row alpha of E holds the coordinate components of e_alpha
// (e_i = d_i - N^a_i d_a, e_a = d_a). Row alpha of theta holds the
// components of e^alpha (e^a = dy^a + N^a_i dx^i), so theta E^T = 1.
struct Frame {
  Mat4 E;
  Mat4 theta;
};
Frame n_adapted_frame(const MetricSample& s);

// Full coordinate-basis metric g_{mu nu} including the N-dependent off-diagonal blocks.
Mat4 coordinate_metric(const MetricSample& s);

// ed(alpha, k) = e_alpha of the k-th diagonal coefficient.
Mat4 elongated_derivatives(const MetricSample& s);
// eN[alpha](a, k) = e_alpha N^a_k
std::array<Eigen::Matrix2d, 4> elongated_N_derivatives(const MetricSample& s);

// Structure coefficients [e_a, e_b] = w^c_ab e_c.
// Horizontal block: w^a_ij = Omega^a_ij = e_j N^a_i - e_i N^a_j; mixed: w^b_ia = d_a N^b_i.
Tensor3 anholonomy(const MetricSample& s);

// Connection coefficients with D_{e_b} e_a = G^c_ab e_c.
Tensor3 canonical_dconnection(const MetricSample& s);
// Levi-Civita connection of the same metric expressed in the N-adapted frame.
Tensor3 levi_civita_frame(const MetricSample& s);
// T^c_ab = G^c_ab - G^c_ba + w^c_ab (components of T(e_b, e_a)).
Tensor3 torsion(const Tensor3& gamma, const Tensor3& w);
Tensor3 torsion(const MetricSample& s);
// Z = Levi-Civita - canonical.
Tensor3 distortion(const MetricSample& s);
// Z assembled block by block from torsion, anholonomy and the h/v projectors.
Tensor3 distortion_projector_form(const MetricSample& s);

// Max |D_c g_ab| of a connection on the d-metric (0 for metric-compatible ones).
double nonmetricity(const MetricSample& s, const Tensor3& gamma);

// Second-order operator a^{mn} d_m d_n + c^m d_m in chart coordinates.
struct SecondOrderOperator {
  Mat4 a = Mat4::Zero();
  Vec4 c = Vec4::Zero();
  double apply(const Jet& f) const;
};
// g^{ab} (e_a e_b f - G^c_ab e_c f) for the canonical d-connection.
SecondOrderOperator laplace_beltrami_operator(const MetricSample& s);
double laplace_beltrami(const MetricSpec& spec, const ScalarField& f, const ChartPoint& u);

// Gram-Schmidt in the d-metric. Columns of the hint and of the result are
// N-adapted components e^alpha_{alpha'}; result satisfies e^T diag(g) e = diag(signature).
Mat4 orthonormalize_frame(const MetricSample& s, const std::array<int, 4>& signature,
                          const Mat4& hint = Mat4::Identity());
double orthonormality_error(const MetricSample& s, const std::array<int, 4>& signature, const Mat4& e);

// e_alpha applied to a scalar with jet f.
Vec4 elongated_gradient(const Frame& fr, const Jet& f);

}  // namespace nhdiff::geometry
