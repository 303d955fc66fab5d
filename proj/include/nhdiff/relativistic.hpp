#pragma once

#include <array>
#include <functional>

#include <Eigen/Dense>

#include "nhdiff/geometry.hpp"
#include "nhdiff/sde.hpp"
#include "nhdiff/types.hpp"

namespace nhdiff::relativistic {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Orthonormal index of the timelike leg; the spatial legs are 0, 1, 3.
inline constexpr int kTime = 2;
inline constexpr std::array<int, 3> kSpatial{0, 1, 3};

struct HyperbolicData {
  Mat3 h;                     // delta - v v^T / v_time^2
  std::array<Mat3, 3> gamma;  // gamma[a](b, c) = v^a h_bc
  double v_time = 1.0;
};
HyperbolicData hyperbolic_metric(const Vec3& v_hat);
// Lower-triangular E with E E^T = h^{-1}, so E^T h E = 1.
Mat3 fiber_frame(const Vec3& v_hat);
// max |E^T h E - 1|
double fiber_frame_error(const Vec3& v_hat, const Mat3& E);
// Gram-Schmidt of the columns of E in the metric h(v_hat).
Mat3 reorthonormalize_fiber(const Vec3& v_hat, const Mat3& E);

// Orthonormal 4-velocity with the time component rebuilt from the constraint.
Vec4 four_velocity(const Vec3& v_hat);
// |eta v v + 1| for eta = diag(1, 1, -1, 1).
double constraint_violation(const Vec4& v);

// Packed as u (4), v_hat (3), E (column-major, 9).
struct RelativisticState {
  Vec4 u = Vec4::Zero();
  Vec3 v_hat = Vec3::Zero();
  Mat3 E = Mat3::Identity();
  double v_time() const;
  sde::State pack() const;
  static RelativisticState unpack(const sde::State& s);
  static RelativisticState unpack(const double* s);
};
inline constexpr int kRelativisticDim = 16;

// External force per unit rest mass, B^a = F^a / m0, as a function of (tau, u, v_hat).
using ExternalForce = std::function<Vec3(double, const Vec4&, const Vec3&)>;

struct RelativisticOptions {
  sde::WienerConfig wiener;  // dim is forced to 3
  long paths = 1;
  int threads = 1;
  long reorthonormalize_every = 100;  // fiber frame; 0 disables
  long record_every = 0;
  long record_paths = 0;
  ExternalForce force;  // empty: no external force
};

// Special-relativistic diffusion on the Minkowski base with trivial N.
sde::PathEnsemble sr_relativistic_diffusion(const RelativisticState& s0, const RelativisticOptions& opt);
// Same system on a d-metric, with the gravitational force from the canonical
// d-connection in the orthonormalized N-adapted frame e(u) = orthonormalize_frame(u, hint 1).
sde::PathEnsemble gr_relativistic_diffusion(const geometry::MetricSpec& spec, const RelativisticState& s0,
                                            const RelativisticOptions& opt);
// The drift of v' along the frame: -e^{-1} (G(V, V) + (D_V e) v'), V = e v'.
Vec4 gravitational_force(const geometry::MetricSpec& spec, const ChartPoint& u, const Vec4& v);

// Frame-bundle diffusion on a Riemannian-signature spec. State is u (4)
// followed by the N-adapted frame components e^alpha_{alpha'} (column-major, 16).
struct FrameBundleState {
  Vec4 u = Vec4::Zero();
  Mat4 e = Mat4::Identity();
  double tau = 0.0;
  sde::State pack() const;
  static FrameBundleState unpack(const double* s);
};
inline constexpr int kFrameBundleDim = 20;

// N-adapted drift A^alpha as a function of (tau, u, e).
using FrameDrift = std::function<Vec4(double, const Vec4&, const Mat4&)>;

struct FrameBundleOptions {
  sde::WienerConfig wiener;  // dim is forced to 4
  long paths = 1;
  int threads = 1;
  long reorthonormalize_every = 100;  // 0 disables
  long record_every = 0;
  long record_paths = 0;
};

sde::SDESystem frame_bundle_system(const geometry::MetricSpec& spec, const FrameDrift& drift);
sde::PathEnsemble frame_bundle_diffusion(const geometry::MetricSpec& spec, const FrameBundleState& s0,
                                         const FrameDrift& drift, const FrameBundleOptions& opt);

}  // namespace nhdiff::relativistic
