#include "nhdiff/geometry.hpp"

#include <cmath>

namespace nhdiff::geometry {

namespace {

constexpr double kDetFloor = 1e-14;

Vec4 field_gradient(const ScalarField& f, const ChartPoint& u, DerivativeMode mode) {
  if (f.is_constant()) return Vec4::Zero();
  return mode == DerivativeMode::Analytic ? f.jet(u).g : f.fd_gradient(u);
}

}  // namespace

MetricSpec MetricSpec::flat(std::array<int, 4> signature) {
  MetricSpec s;
  s.g1 = ScalarField::constant(signature[0]);
  s.g2 = ScalarField::constant(signature[1]);
  s.h3 = ScalarField::constant(signature[2]);
  s.h4 = ScalarField::constant(signature[3]);
  s.signature = signature;
  return s;
}

void MetricSpec::validate() const {
  for (int s : signature)
    if (s != 1 && s != -1) throw ConfigError("signature entries must be +1 or -1");
  if (mode != DerivativeMode::Analytic) return;
  auto ok = [](const ScalarField& f) { return f.is_constant() || f.has_analytic_jet(); };
  if (!ok(g1) || !ok(g2) || !ok(h3) || !ok(h4))
    throw ConfigError("analytic derivative mode requires analytic metric coefficients");
  for (const auto& row : N)
    for (const auto& f : row)
      if (!ok(f)) throw ConfigError("analytic derivative mode requires analytic N coefficients");
}

MetricSample sample(const MetricSpec& spec, const ChartPoint& u) {
  MetricSample s;
  s.u = u;
  const ScalarField* diag[4] = {&spec.g1, &spec.g2, &spec.h3, &spec.h4};
  for (int k = 0; k < 4; ++k) {
    s.d(k) = (*diag[k])(u);
    s.dd.row(k) = field_gradient(*diag[k], u, spec.mode).transpose();
  }
  for (auto& m : s.dN) m.setZero();
  for (int a = 0; a < 2; ++a)
    for (int k = 0; k < 2; ++k) {
      const ScalarField& f = spec.N[a][k];
      s.N(a, k) = f(u);
      const Vec4 g = field_gradient(f, u, spec.mode);
      for (int m = 0; m < 4; ++m) s.dN[m](a, k) = g(m);
    }
  if (!std::isfinite(s.d.sum()) || !std::isfinite(s.N.sum()))
    throw NumericalError("non-finite metric coefficient");
  if (std::abs(s.d(0) * s.d(1)) < kDetFloor) throw NumericalError("degenerate h-metric: |det g| < 1e-14");
  if (std::abs(s.d(2) * s.d(3)) < kDetFloor) throw NumericalError("degenerate v-metric: |det h| < 1e-14");
  return s;
}

Frame n_adapted_frame(const MetricSample& s) {
  Frame f;
  f.E.setIdentity();
  f.theta.setIdentity();
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 2; ++a) {
      f.E(i, 2 + a) = -s.N(a, i);
      f.theta(2 + a, i) = s.N(a, i);
    }
  return f;
}

Mat4 coordinate_metric(const MetricSample& s) {
  const Frame f = n_adapted_frame(s);
  return f.theta.transpose() * s.d.asDiagonal() * f.theta;
}

Mat4 elongated_derivatives(const MetricSample& s) {
  return n_adapted_frame(s).E * s.dd.transpose();
}

std::array<Eigen::Matrix2d, 4> elongated_N_derivatives(const MetricSample& s) {
  const Frame f = n_adapted_frame(s);
  std::array<Eigen::Matrix2d, 4> out;
  for (int al = 0; al < 4; ++al) {
    out[al].setZero();
    for (int m = 0; m < 4; ++m) out[al] += f.E(al, m) * s.dN[m];
  }
  return out;
}

Tensor3 anholonomy(const MetricSample& s) {
  Tensor3 w = zero_tensor3();
  const auto eN = elongated_N_derivatives(s);
  for (int a = 0; a < 2; ++a) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) w[2 + a](i, j) = eN[j](a, i) - eN[i](a, j);
    for (int i = 0; i < 2; ++i)
      for (int b = 0; b < 2; ++b) {
        const double d = s.dN[2 + b](a, i);
        w[2 + a](i, 2 + b) = d;
        w[2 + a](2 + b, i) = -d;
      }
  }
  return w;
}

Tensor3 canonical_dconnection(const MetricSample& s) {
  Tensor3 G = zero_tensor3();
  const Mat4 ed = elongated_derivatives(s);  // ed(alpha, k) = e_alpha d_k
  const auto& d = s.d;
  // h-h-h: L^i_jk = 1/2 g^ii (e_k g_ji + e_j g_ki - e_i g_jk)
  for (int i : kH)
    for (int j : kH)
      for (int k : kH) {
        double v = 0.0;
        if (j == i) v += ed(k, i);
        if (k == i) v += ed(j, i);
        if (j == k) v -= ed(i, j);
        G[i](j, k) = 0.5 * v / d(i);
      }
  // v-v-h: L^a_bk = e_b N^a_k + 1/2 h^aa (delta_ab e_k h_a - h_a e_b N^a_k - h_b e_a N^b_k)
  for (int a : kV)
    for (int b : kV)
      for (int k : kH) {
        const double dbN = s.dN[b](a - 2, k);
        const double daN = s.dN[a](b - 2, k);
        double v = dbN + 0.5 * (-d(a) * dbN - d(b) * daN) / d(a);
        if (a == b) v += 0.5 * ed(k, a) / d(a);
        G[a](b, k) = v;
      }
  // h-h-v: C^i_jc = 1/2 g^ii e_c g_ji
  for (int i : kH)
    for (int c : kV) G[i](i, c) = 0.5 * ed(c, i) / d(i);
  // v-v-v: C^a_bc = 1/2 h^aa (e_c h_ba + e_b h_ca - e_a h_bc)
  for (int a : kV)
    for (int b : kV)
      for (int c : kV) {
        double v = 0.0;
        if (b == a) v += ed(c, a);
        if (c == a) v += ed(b, a);
        if (b == c) v -= ed(a, b);
        G[a](b, c) = 0.5 * v / d(a);
      }
  return G;
}

Tensor3 levi_civita_frame(const MetricSample& s) {
  const Tensor3 w = anholonomy(s);
  const Mat4 ed = elongated_derivatives(s);
  const Vec4& d = s.d;
  auto e_g = [&](int al, int b, int c) { return b == c ? ed(al, b) : 0.0; };
  Tensor3 G = zero_tensor3();
  // Koszul formula: G_{m a b} = 1/2 (e_b g_am + e_a g_bm - e_m g_ab
  //   + w^n_ba g_nm - w^n_bm g_na - w^n_am g_nb)
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int m = 0; m < 4; ++m) {
        const double v = e_g(b, a, m) + e_g(a, b, m) - e_g(m, a, b) + w[m](b, a) * d(m) -
                         w[a](b, m) * d(a) - w[b](a, m) * d(b);
        G[m](a, b) = 0.5 * v / d(m);
      }
  return G;
}

Tensor3 torsion(const Tensor3& G, const Tensor3& w) {
  Tensor3 T;
  for (int c = 0; c < 4; ++c) T[c] = G[c] - G[c].transpose() + w[c];
  return T;
}

Tensor3 torsion(const MetricSample& s) { return torsion(canonical_dconnection(s), anholonomy(s)); }

Tensor3 distortion(const MetricSample& s) {
  const Tensor3 lc = levi_civita_frame(s);
  const Tensor3 cd = canonical_dconnection(s);
  Tensor3 Z;
  for (int c = 0; c < 4; ++c) Z[c] = lc[c] - cd[c];
  return Z;
}

Tensor3 distortion_projector_form(const MetricSample& s) {
  const Tensor3 G = canonical_dconnection(s);
  const Tensor3 w = anholonomy(s);
  const Tensor3 T = torsion(G, w);
  const Vec4& d = s.d;
  auto g = [&](int a, int b) { return a == b ? d(a) : 0.0; };
  auto gi = [&](int a, int b) { return a == b ? 1.0 / d(a) : 0.0; };
  auto delta = [](int a, int b) { return a == b ? 1.0 : 0.0; };
  // +-Xi^{ab}_{cd} = 1/2 (delta^a_c delta^b_d +- g_cd g^ab), same form on both blocks.
  auto Xi = [&](double sgn, int a, int b, int c, int e) {
    return 0.5 * (delta(a, c) * delta(b, e) + sgn * g(c, e) * gi(a, b));
  };
  Tensor3 Z = zero_tensor3();
  // Z^a_jk = -C^i_jb g_ik h^ab - 1/2 Omega^a_jk
  for (int a : kV)
    for (int j : kH)
      for (int k : kH) {
        double v = -0.5 * w[a](j, k);
        for (int i : kH)
          for (int b : kV) v -= G[i](j, b) * g(i, k) * gi(a, b);
        Z[a](j, k) = v;
      }
  // Z^i_bk = 1/2 Omega^c_jk h_cb g^ji + (+Xi^{ih}_{jk}) C^j_hb
  // Z^i_kb = 1/2 Omega^c_jk h_cb g^ji + (-Xi^{ih}_{jk}) C^j_hb
  for (int i : kH)
    for (int b : kV)
      for (int k : kH) {
        double om = 0.0, plus = 0.0, minus = 0.0;
        for (int j : kH) {
          for (int c : kV) om += 0.5 * w[c](j, k) * g(c, b) * gi(j, i);
          for (int h : kH) {
            plus += Xi(+1.0, i, h, j, k) * G[j](h, b);
            minus += Xi(-1.0, i, h, j, k) * G[j](h, b);
          }
        }
        Z[i](b, k) = om + plus;
        Z[i](k, b) = om + minus;
      }
  // Z^a_bk = (-Xi^{ad}_{cb}) T^c_kd,  Z^a_kb = -(+Xi^{ad}_{cb}) T^c_kd
  for (int a : kV)
    for (int b : kV)
      for (int k : kH) {
        double v = 0.0, u = 0.0;
        for (int c : kV)
          for (int e : kV) {
            v += Xi(-1.0, a, e, c, b) * T[c](k, e);
            u -= Xi(+1.0, a, e, c, b) * T[c](k, e);
          }
        Z[a](b, k) = v;
        Z[a](k, b) = u;
      }
  // Z^i_ab = g^ij / 2 (T^c_ja h_cb + T^c_jb h_ca)
  for (int i : kH)
    for (int a : kV)
      for (int b : kV) {
        double v = 0.0;
        for (int j : kH)
          for (int c : kV) v += 0.5 * gi(i, j) * (T[c](j, a) * g(c, b) + T[c](j, b) * g(c, a));
        Z[i](a, b) = v;
      }
  return Z;
}

double nonmetricity(const MetricSample& s, const Tensor3& G) {
  const Mat4 ed = elongated_derivatives(s);
  double m = 0.0;
  for (int c = 0; c < 4; ++c)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        double v = (a == b ? ed(c, a) : 0.0) - G[b](a, c) * s.d(b) - G[a](b, c) * s.d(a);
        m = std::max(m, std::abs(v));
      }
  return m;
}

double SecondOrderOperator::apply(const Jet& f) const {
  return (a.cwiseProduct(f.h)).sum() + c.dot(f.g);
}

SecondOrderOperator laplace_beltrami_operator(const MetricSample& s) {
  const Frame fr = n_adapted_frame(s);
  const Tensor3 G = canonical_dconnection(s);
  const auto eN = elongated_N_derivatives(s);
  SecondOrderOperator op;
  for (int al = 0; al < 4; ++al) {
    const double ginv = 1.0 / s.d(al);
    op.a += ginv * fr.E.row(al).transpose() * fr.E.row(al);
    Vec4 first = Vec4::Zero();
    // e_al applied to the coordinate components of e_al (only e_i carries -N^a_i).
    if (is_horizontal(al))
      for (int a = 0; a < 2; ++a) first(2 + a) = -eN[al](a, al);
    for (int c = 0; c < 4; ++c) first -= G[c](al, al) * fr.E.row(c).transpose();
    op.c += ginv * first;
  }
  return op;
}

double laplace_beltrami(const MetricSpec& spec, const ScalarField& f, const ChartPoint& u) {
  const MetricSample s = sample(spec, u);
  const Jet j = spec.mode == DerivativeMode::Analytic ? f.jet(u) : f.fd_jet(u);
  return laplace_beltrami_operator(s).apply(j);
}

Mat4 orthonormalize_frame(const MetricSample& s, const std::array<int, 4>& sig, const Mat4& hint) {
  Mat4 e = hint;
  auto ip = [&](const Vec4& x, const Vec4& y) { return (x.array() * s.d.array() * y.array()).sum(); };
  for (int k = 0; k < 4; ++k) {
    Vec4 v = hint.col(k);
    for (int j = 0; j < k; ++j) v -= (ip(v, e.col(j)) / sig[j]) * e.col(j);
    const double n2 = ip(v, v);
    if (std::abs(n2) < kDetFloor || (n2 > 0) != (sig[k] > 0))
      throw NumericalError("orthonormalize_frame: hint vector " + std::to_string(k) +
                           " is null or has the wrong causal character");
    e.col(k) = v / std::sqrt(std::abs(n2));
  }
  return e;
}

double orthonormality_error(const MetricSample& s, const std::array<int, 4>& sig, const Mat4& e) {
  Mat4 eta = Mat4::Zero();
  for (int k = 0; k < 4; ++k) eta(k, k) = sig[k];
  return (e.transpose() * s.d.asDiagonal() * e - eta).cwiseAbs().maxCoeff();
}

Vec4 elongated_gradient(const Frame& fr, const Jet& f) { return fr.E * f.g; }

}  // namespace nhdiff::geometry
