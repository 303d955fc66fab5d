#include "nhdiff/relativistic.hpp"

#include <cmath>
#include <string>


namespace nhdiff::relativistic {

HyperbolicData hyperbolic_metric(const Vec3& v) {
  HyperbolicData d;
  d.v_time = std::sqrt(1.0 + v.squaredNorm());
  d.h = Mat3::Identity() - v * v.transpose() / (d.v_time * d.v_time);
  for (int a = 0; a < 3; ++a) d.gamma[a] = v(a) * d.h;
  return d;
}

Mat3 fiber_frame(const Vec3& v) {
  // h^{-1} = 1 + v v^T
  const Mat3 hinv = Mat3::Identity() + v * v.transpose();
  return hinv.llt().matrixL();
}

double fiber_frame_error(const Vec3& v, const Mat3& E) {
  const Mat3 h = hyperbolic_metric(v).h;
  return (E.transpose() * h * E - Mat3::Identity()).cwiseAbs().maxCoeff();
}

Mat3 reorthonormalize_fiber(const Vec3& v, const Mat3& E) {
  const Mat3 h = hyperbolic_metric(v).h;
  Mat3 out = E;
  for (int k = 0; k < 3; ++k) {
    Vec3 c = E.col(k);
    for (int j = 0; j < k; ++j) c -= (c.dot(h * out.col(j))) * out.col(j);
    const double n2 = c.dot(h * c);
    if (!(n2 > 1e-300)) throw NumericalError("fiber frame degenerated");
    out.col(k) = c / std::sqrt(n2);
  }
  return out;
}

Vec4 four_velocity(const Vec3& v) {
  Vec4 w;
  for (int a = 0; a < 3; ++a) w(kSpatial[a]) = v(a);
  w(kTime) = std::sqrt(1.0 + v.squaredNorm());
  return w;
}

double constraint_violation(const Vec4& v) {
  return std::abs(v(0) * v(0) + v(1) * v(1) - v(2) * v(2) + v(3) * v(3) + 1.0);
}

double RelativisticState::v_time() const { return std::sqrt(1.0 + v_hat.squaredNorm()); }

sde::State RelativisticState::pack() const {
  sde::State s(kRelativisticDim);
  s.segment<4>(0) = u;
  s.segment<3>(4) = v_hat;
  for (int c = 0; c < 3; ++c) s.segment<3>(7 + 3 * c) = E.col(c);
  return s;
}

RelativisticState RelativisticState::unpack(const double* s) {
  RelativisticState r;
  for (int k = 0; k < 4; ++k) r.u(k) = s[k];
  for (int a = 0; a < 3; ++a) r.v_hat(a) = s[4 + a];
  for (int c = 0; c < 3; ++c)
    for (int a = 0; a < 3; ++a) r.E(a, c) = s[7 + 3 * c + a];
  return r;
}

RelativisticState RelativisticState::unpack(const sde::State& s) { return unpack(s.data()); }

sde::State FrameBundleState::pack() const {
  sde::State s(kFrameBundleDim);
  s.segment<4>(0) = u;
  for (int c = 0; c < 4; ++c) s.segment<4>(4 + 4 * c) = e.col(c);
  return s;
}

FrameBundleState FrameBundleState::unpack(const double* s) {
  FrameBundleState r;
  for (int k = 0; k < 4; ++k) r.u(k) = s[k];
  for (int c = 0; c < 4; ++c)
    for (int a = 0; a < 4; ++a) r.e(a, c) = s[4 + 4 * c + a];
  return r;
}

namespace {

ChartPoint chart(const Vec4& u) { return {u(0), u(1), u(2), u(3)}; }

// Coordinate displacement rate and gravitational force for orthonormal velocity v.
struct BaseTerms {
  Vec4 du;
  Vec4 force;
};
using Base = std::function<BaseTerms(const Vec4& u, const Vec4& v)>;

BaseTerms minkowski_terms(const Vec4&, const Vec4& v) { return {Mat4::Identity() * v, Vec4::Zero()}; }

BaseTerms curved_terms(const geometry::MetricSpec& spec, const Vec4& u, const Vec4& v) {
  const geometry::MetricSample s = geometry::sample(spec, chart(u));
  const Mat4 e = geometry::orthonormalize_frame(s, spec.signature);
  const Mat4 E = geometry::n_adapted_frame(s).E;
  const Vec4 X = e * v;  // N-adapted components of the velocity
  const Vec4 Xc = E.transpose() * X;
  const Tensor3 G = geometry::canonical_dconnection(s);
  Vec4 a;
  for (int c = 0; c < 4; ++c) a(c) = X.dot(G[c] * X);
  // With the identity hint the frame is diag(|d_k|^{-1/2}), so D_X e is diagonal too.
  Mat4 De = Mat4::Zero();
  for (int k = 0; k < 4; ++k) De(k, k) = -0.5 * e(k, k) * s.dd.row(k).dot(Xc) / s.d(k);
  return {Xc, -e.inverse() * (a + De * v)};
}

void check_relativistic(const RelativisticState& s0, const RelativisticOptions& opt) {
  if (!s0.u.allFinite() || !s0.v_hat.allFinite() || !s0.E.allFinite())
    throw ConfigError("relativistic initial state is not finite");
  if (fiber_frame_error(s0.v_hat, s0.E) > 1e-8)
    throw ConfigError("initial fiber frame does not satisfy h E E = 1");
  if (opt.reorthonormalize_every < 0) throw ConfigError("reorthonormalize_every must be non-negative");
}

// Shared by the special and general relativistic drivers, so that the flat
// general case runs through exactly the same arithmetic.
sde::PathEnsemble run_relativistic(const Base& base, const RelativisticState& s0, const RelativisticOptions& opt) {
  check_relativistic(s0, opt);
  const ExternalForce force = opt.force;
  sde::SDESystem sys;
  sys.state_dim = kRelativisticDim;
  sys.noise_dim = 3;
  sys.interpretation = sde::Interpretation::Stratonovich;
  sys.sigma = [](double, const sde::State& U) {
    const RelativisticState s = RelativisticState::unpack(U);
    const HyperbolicData hd = hyperbolic_metric(s.v_hat);
    sde::NoiseMatrix m = sde::NoiseMatrix::Zero(kRelativisticDim, 3);
    m.block<3, 3>(4, 0) = s.E;
    // dE^a_{a'} = v^a h_bc E^c_{a'} dv^b with dv = E dW
    const Mat3 G = s.E.transpose() * hd.h * s.E;
    for (int c = 0; c < 3; ++c)
      for (int a = 0; a < 3; ++a) m.row(7 + 3 * c + a) = s.v_hat(a) * G.col(c).transpose();
    return m;
  };
  sys.drift = [base, force](double tau, const sde::State& U) {
    const RelativisticState s = RelativisticState::unpack(U);
    const Vec4 v = four_velocity(s.v_hat);
    const BaseTerms bt = base(s.u, v);
    Vec3 f;
    for (int a = 0; a < 3; ++a) f(a) = bt.force(kSpatial[a]);
    f += force ? force(tau, s.u, s.v_hat) : Vec3::Zero();
    const HyperbolicData hd = hyperbolic_metric(s.v_hat);
    const Eigen::RowVector3d fh = f.transpose() * hd.h * s.E;
    sde::State d(kRelativisticDim);
    d.segment<4>(0) = bt.du;
    d.segment<3>(4) = f;
    for (int c = 0; c < 3; ++c)
      for (int a = 0; a < 3; ++a) d(7 + 3 * c + a) = s.v_hat(a) * fh(c);
    return d;
  };
  sde::IntegrationOptions io;
  io.wiener = opt.wiener;
  io.wiener.dim = 3;
  io.paths = opt.paths;
  io.u0 = s0.pack();
  io.threads = opt.threads;
  io.record_every = opt.record_every;
  io.record_paths = opt.record_paths;
  const long K = opt.reorthonormalize_every;
  if (K > 0)
    io.post_step = [K](long step, sde::State& U) {
      if (step % K != 0) return;
      RelativisticState s = RelativisticState::unpack(U);
      s.E = reorthonormalize_fiber(s.v_hat, s.E);
      U = s.pack();
    };
  return sde::integrate_stratonovich(sys, io);
}

}  // namespace

Vec4 gravitational_force(const geometry::MetricSpec& spec, const ChartPoint& u, const Vec4& v) {
  return curved_terms(spec, Vec4(u[0], u[1], u[2], u[3]), v).force;
}

sde::PathEnsemble sr_relativistic_diffusion(const RelativisticState& s0, const RelativisticOptions& opt) {
  return run_relativistic(minkowski_terms, s0, opt);
}

sde::PathEnsemble gr_relativistic_diffusion(const geometry::MetricSpec& spec, const RelativisticState& s0,
                                            const RelativisticOptions& opt) {
  spec.validate();
  if (spec.signature != std::array<int, 4>{1, 1, -1, 1})
    throw ConfigError("relativistic diffusion needs signature (+,+,-,+)");
  return run_relativistic([spec](const Vec4& u, const Vec4& v) { return curved_terms(spec, u, v); }, s0, opt);
}

sde::SDESystem frame_bundle_system(const geometry::MetricSpec& spec, const FrameDrift& drift) {
  sde::SDESystem sys;
  sys.state_dim = kFrameBundleDim;
  sys.noise_dim = 4;
  sys.interpretation = sde::Interpretation::Stratonovich;
  // Rows of the e block for an N-adapted displacement d: de^c_{a'} = -G^c_{nu beta} e^nu_{a'} d^beta.
  auto transport = [](const Tensor3& G, const Mat4& e, const Vec4& d) {
    Mat4 de;
    for (int c = 0; c < 4; ++c) de.row(c) = -(G[c] * d).transpose() * e;
    return de;
  };
  sys.sigma = [spec, transport](double, const sde::State& U) {
    const FrameBundleState s = FrameBundleState::unpack(U.data());
    const geometry::MetricSample ms = geometry::sample(spec, chart(s.u));
    const Mat4 E = geometry::n_adapted_frame(ms).E;
    const Tensor3 G = geometry::canonical_dconnection(ms);
    sde::NoiseMatrix m(kFrameBundleDim, 4);
    for (int k = 0; k < 4; ++k) {
      const Vec4 d = s.e.col(k);
      m.block<4, 1>(0, k) = E.transpose() * d;
      const Mat4 de = transport(G, s.e, d);
      for (int c = 0; c < 4; ++c) m.block<4, 1>(4 + 4 * c, k) = de.col(c);
    }
    return m;
  };
  sys.drift = [spec, drift, transport](double tau, const sde::State& U) {
    sde::State out = sde::State::Zero(kFrameBundleDim);
    if (!drift) return out;
    const FrameBundleState s = FrameBundleState::unpack(U.data());
    const Vec4 A = drift(tau, s.u, s.e);
    const geometry::MetricSample ms = geometry::sample(spec, chart(s.u));
    out.segment<4>(0) = geometry::n_adapted_frame(ms).E.transpose() * A;
    const Mat4 de = transport(geometry::canonical_dconnection(ms), s.e, A);
    for (int c = 0; c < 4; ++c) out.segment<4>(4 + 4 * c) = de.col(c);
    return out;
  };
  return sys;
}

sde::PathEnsemble frame_bundle_diffusion(const geometry::MetricSpec& spec, const FrameBundleState& s0,
                                         const FrameDrift& drift, const FrameBundleOptions& opt) {
  spec.validate();
  for (int sg : spec.signature)
    if (sg != 1) throw ConfigError("frame-bundle diffusion needs a Riemannian signature");
  const geometry::MetricSample ms = geometry::sample(spec, chart(s0.u));
  if (geometry::orthonormality_error(ms, spec.signature, s0.e) > 1e-8)
    throw ConfigError("initial frame is not orthonormal");
  if (opt.reorthonormalize_every < 0) throw ConfigError("reorthonormalize_every must be non-negative");

  sde::IntegrationOptions io;
  io.wiener = opt.wiener;
  io.wiener.dim = 4;
  io.paths = opt.paths;
  io.u0 = s0.pack();
  io.threads = opt.threads;
  io.record_every = opt.record_every;
  io.record_paths = opt.record_paths;
  const long K = opt.reorthonormalize_every;
  if (K > 0)
    io.post_step = [spec, K](long step, sde::State& U) {
      if (step % K != 0) return;
      FrameBundleState s = FrameBundleState::unpack(U.data());
      s.e = geometry::orthonormalize_frame(geometry::sample(spec, chart(s.u)), spec.signature, s.e);
      U = s.pack();
    };
  return sde::integrate_stratonovich(frame_bundle_system(spec, drift), io);
}

}  // namespace nhdiff::relativistic
