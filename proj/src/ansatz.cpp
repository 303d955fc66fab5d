#include "nhdiff/ansatz.hpp"

#include <cmath>
#include <sstream>

#include "nhdiff/parallel.hpp"

namespace nhdiff::ansatz {

namespace {

std::string where(const Grid& g, int i, int j, int k) {
  std::ostringstream os;
  os << "(x1=" << g.axes[0].at(i) << ", x2=" << g.axes[1].at(j) << ", t=" << g.axes[2].at(k) << ")";
  return os.str();
}

// Cumulative trapezoid along t; out[0] = 0.
void trapezoid(const double* f, int n, double dt, double* out) {
  out[0] = 0.0;
  for (int k = 1; k < n; ++k) out[k] = out[k - 1] + 0.5 * dt * (f[k - 1] + f[k]);
}

GridField zeros(const Grid& g) { return GridField(g.size(), 0.0); }

FieldDerivatives allocated(const Grid& g) {
  FieldDerivatives d;
  d.t = zeros(g);
  d.tt = zeros(g);
  for (int i = 0; i < 2; ++i) {
    d.x[i] = zeros(g);
    d.xt[i] = zeros(g);
  }
  return d;
}

// Derivative along one axis of a grid field, second order everywhere.
GridField diff(const GridField& f, const Grid& g, int axis) {
  const int n = g.axes[axis].n;
  const double h = g.axes[axis].step;
  const std::size_t stride = axis == 2 ? 1 : axis == 1 ? g.axes[2].n : std::size_t(g.axes[1].n) * g.axes[2].n;
  GridField out(f.size());
  for (std::size_t p = 0; p < f.size(); ++p) {
    const int pos = static_cast<int>((p / stride) % n);
    if (pos == 0) {
      out[p] = (-3 * f[p] + 4 * f[p + stride] - f[p + 2 * stride]) / (2 * h);
    } else if (pos == n - 1) {
      out[p] = (3 * f[p] - 4 * f[p - stride] + f[p - 2 * stride]) / (2 * h);
    } else {
      out[p] = (f[p + stride] - f[p - stride]) / (2 * h);
    }
  }
  return out;
}

GridField diff2(const GridField& f, const Grid& g, int axis) {
  const int n = g.axes[axis].n;
  const double h2 = g.axes[axis].step * g.axes[axis].step;
  const std::size_t stride = axis == 2 ? 1 : axis == 1 ? g.axes[2].n : std::size_t(g.axes[1].n) * g.axes[2].n;
  GridField out(f.size());
  for (std::size_t p = 0; p < f.size(); ++p) {
    const int pos = static_cast<int>((p / stride) % n);
    const std::size_t s = stride;
    if (pos == 0) {
      out[p] = (2 * f[p] - 5 * f[p + s] + 4 * f[p + 2 * s] - f[p + 3 * s]) / h2;
    } else if (pos == n - 1) {
      out[p] = (2 * f[p] - 5 * f[p - s] + 4 * f[p - 2 * s] - f[p - 3 * s]) / h2;
    } else {
      out[p] = (f[p + s] - 2 * f[p] + f[p - s]) / h2;
    }
  }
  return out;
}

void check_signs(const AnsatzSolution& s, const GenerateOptions& opt) {
  const Grid& g = s.grid;
  for (int i = 0; i < g.axes[0].n; ++i)
    for (int j = 0; j < g.axes[1].n; ++j)
      for (int k = 0; k < g.axes[2].n; ++k) {
        const std::size_t p = g.index(i, j, k);
        if (!std::isfinite(s.h3[p]) || !std::isfinite(s.h4[p]))
          throw NumericalError("non-finite v-metric at " + where(g, i, j, k));
        if (k > 0 && s.h4[p] * s.h4[p - 1] < 0)
          throw NumericalError("h4 crosses zero between t=" + std::to_string(g.axes[2].at(k - 1)) +
                               " and " + where(g, i, j, k));
        if (s.h3[p] * s.h4[p] == 0.0) throw NumericalError("h3 h4 = 0 at " + where(g, i, j, k));
      }
  for (int a = 0; a < 2; ++a) {
    const int want = opt.signature[a];
    if (want == 0) continue;
    const GridField& f = a == 0 ? s.h3 : s.h4;
    for (std::size_t p = 0; p < f.size(); ++p)
      if (f[p] * want < 0) {
        const int k = static_cast<int>(p % g.axes[2].n);
        const int j = static_cast<int>((p / g.axes[2].n) % g.axes[1].n);
        const int i = static_cast<int>(p / (std::size_t(g.axes[2].n) * g.axes[1].n));
        throw ConfigError(std::string("sign choice gives the wrong sign of ") + (a == 0 ? "h3" : "h4") +
                          " at " + where(g, i, j, k));
      }
  }
}

void attach_psi(AnsatzSolution& s, const GeneratingData& gen, const GenerateOptions& opt) {
  const auto r = solve_psi(gen.upsilon4, s.grid.axes[0], s.grid.axes[1], gen.psi_boundary, opt.psi);
  s.psi = r.psi;
  s.psi_residual = r.residual;
}

AnsatzSolution blank(Family f, const Grid& grid) {
  grid.validate();
  AnsatzSolution s;
  s.family = f;
  s.grid = grid;
  s.h3 = zeros(grid);
  s.h4 = zeros(grid);
  for (int a = 0; a < 2; ++a) {
    s.w[a] = zeros(grid);
    s.n[a] = zeros(grid);
  }
  AnsatzSolution::Companions c;
  c.h3 = allocated(grid);
  c.h4 = allocated(grid);
  for (int a = 0; a < 2; ++a) {
    c.w[a] = allocated(grid);
    c.n[a] = allocated(grid);
  }
  s.companions = std::move(c);
  return s;
}

// n_k = 1n_k + 2n_k int I dt with dI/dt and d_i I known per point of a column.
void fill_n(AnsatzSolution& s, const GeneratingData& gen, int i, int j, const std::vector<double>& I,
            const std::vector<double>& It, const std::array<std::vector<double>, 2>& Ix) {
  const Grid& g = s.grid;
  const int nt = g.axes[2].n;
  const double dt = g.axes[2].step;
  std::vector<double> cum(nt);
  std::array<std::vector<double>, 2> cumx{std::vector<double>(nt), std::vector<double>(nt)};
  trapezoid(I.data(), nt, dt, cum.data());
  for (int a = 0; a < 2; ++a) trapezoid(Ix[a].data(), nt, dt, cumx[a].data());
  auto& c = *s.companions;
  for (int k = 0; k < nt; ++k) {
    const std::size_t p = g.index(i, j, k);
    const ChartPoint u = g.point(i, j, k);
    for (int kk = 0; kk < 2; ++kk) {
      const Jet n1 = gen.n1[kk].jet(u), n2 = gen.n2[kk].jet(u);
      s.n[kk][p] = n1.v + n2.v * cum[k];
      c.n[kk].t[p] = n2.v * I[k];
      c.n[kk].tt[p] = n2.v * It[k];
      for (int a = 0; a < 2; ++a) {
        c.n[kk].x[a][p] = n1.g(a) + n2.g(a) * cum[k] + n2.v * cumx[a][k];
        c.n[kk].xt[a][p] = n2.g(a) * I[k] + n2.v * Ix[a][k];
      }
    }
  }
}

// sqrt|h3| / |h4|^(3/2), the n* profile that annuls R_k4, with its partials.
struct NIntegrand {
  double v = 0.0, t = 0.0;
  std::array<double, 2> x{};
};
NIntegrand n_integrand(double h3, double h3t, const std::array<double, 2>& h3x, double h4, double h4t,
                       const std::array<double, 2>& h4x) {
  const double a = std::abs(h4);
  NIntegrand r;
  r.v = std::sqrt(std::abs(h3)) / (a * std::sqrt(a));
  r.t = r.v * (0.5 * h3t / h3 - 1.5 * h4t / h4);
  for (int i = 0; i < 2; ++i) r.x[i] = r.v * (0.5 * h3x[i] / h3 - 1.5 * h4x[i] / h4);
  return r;
}

double relative_tiny(double scale) { return 1e-14 * std::max(1.0, std::abs(scale)); }

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::A: return "A";
    case Family::Vacuum: return "vacuum";
    case Family::H3Const: return "h3const";
    case Family::ConstPhi: return "constphi";
  }
  return "?";
}

void Grid::validate() const {
  for (const auto& a : axes) {
    if (a.n < 4) throw ConfigError("grid axes need at least 4 points");
    if (!(a.step > 0) || !std::isfinite(a.step) || !std::isfinite(a.start))
      throw ConfigError("grid spacings must be positive and finite");
  }
}

double AnsatzSolution::g(int i, int j) const { return std::exp(psi[std::size_t(i) * grid.axes[1].n + j]); }

// ---------------------------------------------------------------- psi solver

namespace {

struct Stencil9 {
  double c, x, y, d;  // centre, x-neighbours, y-neighbours, corners
};

Stencil9 stencil_weights(PsiStencil s, double hx, double hy) {
  const double ix = 1 / (hx * hx), iy = 1 / (hy * hy);
  const double cd = s == PsiStencil::Compact9 ? (hx * hx + hy * hy) / (12 * hx * hx * hy * hy) : 0.0;
  return {-2 * ix - 2 * iy + 4 * cd, ix - 2 * cd, iy - 2 * cd, cd};
}

// Right-hand side of the discrete equation at interior points.
GridField psi_rhs(const ScalarField& upsilon4, const Axis& x1, const Axis& x2, PsiStencil s) {
  const int nx = x1.n, ny = x2.n;
  GridField F(std::size_t(nx) * ny), R(F.size(), 0.0);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) F[std::size_t(i) * ny + j] = 2 * upsilon4({x1.at(i), x2.at(j), 0, 0});
  for (int i = 1; i + 1 < nx; ++i)
    for (int j = 1; j + 1 < ny; ++j) {
      const std::size_t p = std::size_t(i) * ny + j;
      R[p] = F[p];
      if (s == PsiStencil::Compact9)
        R[p] += (F[p + ny] + F[p - ny] - 2 * F[p] + F[p + 1] + F[p - 1] - 2 * F[p]) / 12;
    }
  return R;
}

double apply_stencil(const GridField& u, std::size_t p, int ny, const Stencil9& w) {
  return w.c * u[p] + w.x * (u[p + ny] + u[p - ny]) + w.y * (u[p + 1] + u[p - 1]) +
         w.d * (u[p + ny + 1] + u[p + ny - 1] + u[p - ny + 1] + u[p - ny - 1]);
}

double max_residual(const GridField& u, const GridField& R, int nx, int ny, const Stencil9& w) {
  double m = 0.0;
  for (int i = 1; i + 1 < nx; ++i)
    for (int j = 1; j + 1 < ny; ++j) {
      const std::size_t p = std::size_t(i) * ny + j;
      m = std::max(m, std::abs(apply_stencil(u, p, ny, w) - R[p]));
    }
  return m;
}

}  // namespace

PsiResult solve_psi(const ScalarField& upsilon4, const Axis& x1, const Axis& x2, const ScalarField& boundary,
                    const PsiOptions& opt) {
  if (x1.n < 8 || x2.n < 8) throw ConfigError("solve_psi needs at least an 8x8 grid");
  if (!(opt.omega > 0 && opt.omega < 2)) throw ConfigError("SOR relaxation must lie in (0, 2)");
  const int nx = x1.n, ny = x2.n;
  PsiResult out;
  out.psi.assign(std::size_t(nx) * ny, 0.0);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      if (i == 0 || j == 0 || i == nx - 1 || j == ny - 1) {
        const double b = boundary({x1.at(i), x2.at(j), 0, 0});
        if (!std::isfinite(b)) throw ConfigError("non-finite psi boundary value");
        out.psi[std::size_t(i) * ny + j] = b;
      }
  const GridField R = psi_rhs(upsilon4, x1, x2, opt.stencil);
  const Stencil9 w = stencil_weights(opt.stencil, x1.step, x2.step);
  auto& u = out.psi;
  for (long it = 0; it < opt.max_iterations; ++it) {
    for (int i = 1; i + 1 < nx; ++i)
      for (int j = 1; j + 1 < ny; ++j) {
        const std::size_t p = std::size_t(i) * ny + j;
        const double r = apply_stencil(u, p, ny, w) - R[p];
        u[p] -= opt.omega * r / w.c;
      }
    if (it % 8 == 7 || nx * ny < 4096) {
      out.residual = max_residual(u, R, nx, ny, w);
      out.iterations = it + 1;
      if (!std::isfinite(out.residual)) throw NumericalError("psi solver diverged");
      if (out.residual < opt.tolerance) return out;
    }
  }
  throw NumericalError("psi solver did not converge in " + std::to_string(opt.max_iterations) +
                       " iterations (residual " + std::to_string(out.residual) + ")");
}

double psi_stencil_residual(const GridField& psi, const ScalarField& upsilon4, const Axis& x1, const Axis& x2,
                            PsiStencil stencil) {
  return max_residual(psi, psi_rhs(upsilon4, x1, x2, stencil), x1.n, x2.n,
                      stencil_weights(stencil, x1.step, x2.step));
}

// ---------------------------------------------------------------- aux values

AuxValues aux_values(const Jet& h3, const Jet& h4) {
  if (h3.v * h4.v == 0.0) throw NumericalError("aux values need h3 h4 != 0");
  const double h4s = h4.g(2);
  if (h4s == 0.0) throw NumericalError("h4* = 0: use the vacuum branch");
  AuxValues a;
  a.phi = std::log(std::abs(h4s / std::sqrt(std::abs(h3.v * h4.v))));
  const double phi_t = h4.h(2, 2) / h4s - 0.5 * (h3.g(2) / h3.v + h4s / h4.v);
  for (int i = 0; i < 2; ++i) {
    const double phi_i = h4.h(2, i) / h4s - 0.5 * (h3.g(i) / h3.v + h4.g(i) / h4.v);
    a.alpha[i] = h4s * phi_i;
  }
  a.beta = h4s * phi_t;
  a.gamma = 1.5 * h4s / h4.v - h3.g(2) / h3.v;
  return a;
}

// ---------------------------------------------------------------- family A

AnsatzSolution generate_family_A(const GeneratingData& gen, const Grid& grid, const GenerateOptions& opt) {
  AnsatzSolution s = blank(Family::A, grid);
  const int nt = grid.axes[2].n;
  const double dt = grid.axes[2].step;
  int sg = gen.sign;
  if (sg == 0) {
    // sign(h3) = s sign(h4)
    sg = (opt.signature[0] != 0 && opt.signature[1] != 0) ? opt.signature[0] * opt.signature[1] : -1;
  }
  if (sg != 1 && sg != -1) throw ConfigError("sign must be +1, -1 or 0");
  auto& c = *s.companions;

  parallel_for(static_cast<long>(grid.columns()), opt.threads, [&](long col) {
    const int i = static_cast<int>(col / grid.axes[1].n), j = static_cast<int>(col % grid.axes[1].n);
    std::vector<double> q(nt), qt(nt), cum(nt);
    std::array<std::vector<double>, 2> qx{std::vector<double>(nt), std::vector<double>(nt)};
    std::array<std::vector<double>, 2> cumx{std::vector<double>(nt), std::vector<double>(nt)};
    std::vector<Jet> P(nt), U(nt);
    for (int k = 0; k < nt; ++k) {
      const ChartPoint u = grid.point(i, j, k);
      P[k] = gen.phi.jet(u);
      U[k] = gen.upsilon2.jet(u);
      const double pt = P[k].g(2);
      if (pt == 0.0) throw NumericalError("phi* vanishes at " + where(grid, i, j, k));
      if (U[k].v == 0.0) throw NumericalError("upsilon2 vanishes at " + where(grid, i, j, k));
      const double e2 = std::exp(2 * P[k].v);
      q[k] = 2 * pt * e2 / U[k].v;
      qt[k] = (2 * P[k].h(2, 2) + 4 * pt * pt) * e2 / U[k].v - q[k] * U[k].g(2) / U[k].v;
      for (int a = 0; a < 2; ++a)
        qx[a][k] = (2 * P[k].h(2, a) + 4 * pt * P[k].g(a)) * e2 / U[k].v - q[k] * U[k].g(a) / U[k].v;
    }
    trapezoid(q.data(), nt, dt, cum.data());
    for (int a = 0; a < 2; ++a) trapezoid(qx[a].data(), nt, dt, cumx[a].data());

    std::vector<double> I(nt), It(nt);
    std::array<std::vector<double>, 2> Ix{std::vector<double>(nt), std::vector<double>(nt)};
    for (int k = 0; k < nt; ++k) {
      const std::size_t p = grid.index(i, j, k);
      const Jet H0 = gen.h4_0.jet(grid.point(i, j, k));
      const double pt = P[k].g(2), ptt = P[k].h(2, 2);
      const double h4 = H0.v + 2 * sg * cum[k];
      const double h4t = 2 * sg * q[k], h4tt = 2 * sg * qt[k];
      s.h4[p] = h4;
      c.h4.t[p] = h4t;
      c.h4.tt[p] = h4tt;
      // h3 = A / B with A = h4* phi*, B = 2 upsilon2 h4
      const double A = h4t * pt, B = 2 * U[k].v * h4;
      if (B == 0.0) throw NumericalError("h4 = 0 at " + where(grid, i, j, k));
      const double At = h4tt * pt + h4t * ptt, Bt = 2 * (U[k].g(2) * h4 + U[k].v * h4t);
      const double h3 = A / B, h3t = (At * B - A * Bt) / (B * B);
      s.h3[p] = h3;
      c.h3.t[p] = h3t;
      std::array<double, 2> h3x_{}, h4x_{};
      for (int a = 0; a < 2; ++a) {
        const double h4x = H0.g(a) + 2 * sg * cumx[a][k], h4xt = 2 * sg * qx[a][k];
        c.h4.x[a][p] = h4x;
        c.h4.xt[a][p] = h4xt;
        const double Ax = h4xt * pt + h4t * P[k].h(2, a), Bx = 2 * (U[k].g(a) * h4 + U[k].v * h4x);
        const double h3x = (Ax * B - A * Bx) / (B * B);
        c.h3.x[a][p] = h3x;
        h3x_[a] = h3x;
        h4x_[a] = h4x;
        const double pa = P[k].g(a);
        s.w[a][p] = pa / pt;
        c.w[a].t[p] = (P[k].h(a, 2) * pt - pa * ptt) / (pt * pt);
        for (int b = 0; b < 2; ++b)
          c.w[a].x[b][p] = (P[k].h(a, b) * pt - pa * P[k].h(2, b)) / (pt * pt);
      }
      const NIntegrand ni = n_integrand(h3, h3t, h3x_, h4, h4t, h4x_);
      I[k] = ni.v;
      It[k] = ni.t;
      for (int a = 0; a < 2; ++a) Ix[a][k] = ni.x[a];
    }
    fill_n(s, gen, i, j, I, It, Ix);
  });
  // Members not available in closed form.
  c.h3.tt.clear();
  for (int a = 0; a < 2; ++a) {
    c.h3.xt[a].clear();
    c.w[a].tt.clear();
    c.w[a].xt = {};
  }
  check_signs(s, opt);
  attach_psi(s, gen, opt);
  return s;
}

// ---------------------------------------------------------------- vacuum family

AnsatzSolution generate_family_vacuum(const GeneratingData& gen, const Grid& grid, const GenerateOptions& opt) {
  AnsatzSolution s = blank(Family::Vacuum, grid);
  const int nt = grid.axes[2].n;
  auto& c = *s.companions;
  if (gen.h3_samples && gen.h3_samples->size() != grid.size())
    throw ConfigError("h3 realization does not match the grid");
  for (std::size_t p = 0; p < grid.size(); ++p) {
    // upsilon2 must vanish identically for this branch
    const int k = static_cast<int>(p % nt);
    const int j = static_cast<int>((p / nt) % grid.axes[1].n);
    const int i = static_cast<int>(p / (std::size_t(nt) * grid.axes[1].n));
    if (gen.upsilon2(grid.point(i, j, k)) != 0.0)
      throw ConfigError("vacuum family requires upsilon2 = 0; nonzero at " + where(grid, i, j, k));
  }
  FieldDerivatives sampled;
  if (gen.h3_samples) {
    s.h3 = *gen.h3_samples;
    sampled = grid_derivatives(s.h3, grid);
  }

  parallel_for(static_cast<long>(grid.columns()), opt.threads, [&](long col) {
    const int i = static_cast<int>(col / grid.axes[1].n), j = static_cast<int>(col % grid.axes[1].n);
    std::vector<double> I(nt), It(nt);
    std::array<std::vector<double>, 2> Ix{std::vector<double>(nt), std::vector<double>(nt)};
    const Jet H0 = gen.h4_0.jet(grid.point(i, j, 0));
    for (int k = 0; k < nt; ++k) {
      const std::size_t p = grid.index(i, j, k);
      const ChartPoint u = grid.point(i, j, k);
      s.h4[p] = H0.v;
      for (int a = 0; a < 2; ++a) c.h4.x[a][p] = H0.g(a);
      if (gen.h3_samples) {
        c.h3.t[p] = sampled.t[p];
        c.h3.tt[p] = sampled.tt[p];
        for (int a = 0; a < 2; ++a) {
          c.h3.x[a][p] = sampled.x[a][p];
          c.h3.xt[a][p] = sampled.xt[a][p];
        }
      } else {
        const Jet h3 = gen.h3.jet(u);
        s.h3[p] = h3.v;
        c.h3.t[p] = h3.g(2);
        c.h3.tt[p] = h3.h(2, 2);
        for (int a = 0; a < 2; ++a) {
          c.h3.x[a][p] = h3.g(a);
          c.h3.xt[a][p] = h3.h(a, 2);
        }
      }
      const NIntegrand ni = n_integrand(s.h3[p], c.h3.t[p], {c.h3.x[0][p], c.h3.x[1][p]}, H0.v, 0.0,
                                        {H0.g(0), H0.g(1)});
      I[k] = ni.v;
      It[k] = ni.t;
      for (int a = 0; a < 2; ++a) {
        Ix[a][k] = ni.x[a];
        const Jet w = gen.w[a].jet(u);
        s.w[a][p] = w.v;
        c.w[a].t[p] = w.g(2);
        c.w[a].tt[p] = w.h(2, 2);
        for (int b = 0; b < 2; ++b) {
          c.w[a].x[b][p] = w.g(b);
          c.w[a].xt[b][p] = w.h(b, 2);
        }
      }
    }
    fill_n(s, gen, i, j, I, It, Ix);
  });
  check_signs(s, opt);
  attach_psi(s, gen, opt);
  return s;
}

// ---------------------------------------------------------------- h3-constant family

namespace {

using Ode6 = std::array<double, 6>;  // h, h', d1, d1', d2, d2'

Ode6 h4_rhs(double c3, const Jet& U, const Ode6& y) {
  const double h = y[0], hp = y[1];
  Ode6 r{};
  r[0] = hp;
  r[1] = hp * hp / (2 * h) + 2 * c3 * h * U.v;
  for (int a = 0; a < 2; ++a) {
    const double d = y[2 + 2 * a], dp = y[3 + 2 * a];
    r[2 + 2 * a] = dp;
    r[3 + 2 * a] = hp / h * dp - hp * hp / (2 * h * h) * d + 2 * c3 * (d * U.v + h * U.g(a));
  }
  return r;
}

void rk4_step(double c3, const ScalarField& upsilon2, const ChartPoint& u0, double t, double h, Ode6& y) {
  auto at = [&](double tt) { return upsilon2.jet({u0[0], u0[1], tt, 0.0}); };
  const Jet Ua = at(t), Um = at(t + h / 2), Ub = at(t + h);
  const Ode6 k1 = h4_rhs(c3, Ua, y);
  Ode6 tmp;
  for (int r = 0; r < 6; ++r) tmp[r] = y[r] + h / 2 * k1[r];
  const Ode6 k2 = h4_rhs(c3, Um, tmp);
  for (int r = 0; r < 6; ++r) tmp[r] = y[r] + h / 2 * k2[r];
  const Ode6 k3 = h4_rhs(c3, Um, tmp);
  for (int r = 0; r < 6; ++r) tmp[r] = y[r] + h * k3[r];
  const Ode6 k4 = h4_rhs(c3, Ub, tmp);
  for (int r = 0; r < 6; ++r) y[r] += h / 6 * (k1[r] + 2 * k2[r] + 2 * k3[r] + k4[r]);
}

}  // namespace

std::vector<double> integrate_h4(double h3_0, const ScalarField& upsilon2, double x1, double x2, const Axis& t,
                                 double h4_0, double h4t_0, int substeps) {
  if (h4_0 == 0.0) throw ConfigError("h4(t0) must be nonzero");
  Ode6 y{h4_0, h4t_0, 0, 0, 0, 0};
  std::vector<double> out(t.n);
  out[0] = h4_0;
  const double h = t.step / substeps;
  for (int k = 1; k < t.n; ++k) {
    double tt = t.at(k - 1);
    for (int m = 0; m < substeps; ++m, tt += h) rk4_step(h3_0, upsilon2, {x1, x2, 0, 0}, tt, h, y);
    if (!std::isfinite(y[0]) || y[0] * h4_0 <= 0) throw NumericalError("h4 blows up or reaches zero");
    out[k] = y[0];
  }
  return out;
}

AnsatzSolution generate_family_h3const(const GeneratingData& gen, const Grid& grid, const GenerateOptions& opt) {
  if (gen.h3_0 == 0.0) throw ConfigError("h3const family needs a nonzero h3 constant");
  if (opt.rk4_substeps < 1) throw ConfigError("rk4 substeps must be positive");
  AnsatzSolution s = blank(Family::H3Const, grid);
  const int nt = grid.axes[2].n;
  const double c3 = gen.h3_0;
  auto& c = *s.companions;

  parallel_for(static_cast<long>(grid.columns()), opt.threads, [&](long col) {
    const int i = static_cast<int>(col / grid.axes[1].n), j = static_cast<int>(col % grid.axes[1].n);
    const ChartPoint u0 = grid.point(i, j, 0);
    const Jet h0 = gen.h4_init.jet(u0), h0t = gen.h4t_init.jet(u0);
    Ode6 y{h0.v, h0t.v, h0.g(0), h0t.g(0), h0.g(1), h0t.g(1)};
    if (h0.v == 0.0) throw ConfigError("h4(t0) must be nonzero at " + where(grid, i, j, 0));
    std::vector<double> I(nt), It(nt);
    std::array<std::vector<double>, 2> Ix{std::vector<double>(nt), std::vector<double>(nt)};
    const double h = grid.axes[2].step / opt.rk4_substeps;
    for (int k = 0; k < nt; ++k) {
      if (k > 0) {
        double t = grid.axes[2].at(k - 1);
        for (int m = 0; m < opt.rk4_substeps; ++m) {
          rk4_step(c3, gen.upsilon2, u0, t, h, y);
          t += h;
          if (!std::isfinite(y[0]) || y[0] * h0.v <= 0)
            throw NumericalError("h4 blows up or reaches zero near " + where(grid, i, j, k));
        }
      }
      const std::size_t p = grid.index(i, j, k);
      const Jet U = gen.upsilon2.jet(grid.point(i, j, k));
      const Ode6 r = h4_rhs(c3, U, y);
      s.h4[p] = y[0];
      c.h4.t[p] = y[1];
      c.h4.tt[p] = r[1];
      s.h3[p] = c3;
      const NIntegrand ni = n_integrand(c3, 0.0, {0.0, 0.0}, y[0], y[1], {y[2], y[4]});
      I[k] = ni.v;
      It[k] = ni.t;
      // phi~ = ln|h4*| - ln|h3 h4| / 2
      const double ft = std::abs(y[1]) > relative_tiny(y[0]) ? r[1] / y[1] - y[1] / (2 * y[0]) : 0.0;
      for (int a = 0; a < 2; ++a) {
        const double d = y[2 + 2 * a], dp = y[3 + 2 * a];
        c.h4.x[a][p] = d;
        c.h4.xt[a][p] = dp;
        Ix[a][k] = ni.x[a];
        if (ft != 0.0) {
          s.w[a][p] = (dp / y[1] - d / (2 * y[0])) / ft;
        } else {
          s.w[a][p] = 0.0;  // h4* = 0: beta = alpha = 0
        }
      }
    }
    fill_n(s, gen, i, j, I, It, Ix);
  });
  for (int a = 0; a < 2; ++a) c.w[a] = {};
  check_signs(s, opt);
  attach_psi(s, gen, opt);
  return s;
}

// ---------------------------------------------------------------- constant-phi family

AnsatzSolution generate_family_constphi(const GeneratingData& gen, const Grid& grid, const GenerateOptions& opt) {
  if (gen.h_0 == 0.0) throw ConfigError("constphi family needs a nonzero h0");
  AnsatzSolution s = blank(Family::ConstPhi, grid);
  s.sigma_upsilon = zeros(grid);
  const int nt = grid.axes[2].n;
  const double dt = grid.axes[2].step;
  const double h02 = gen.h_0 * gen.h_0;
  auto& c = *s.companions;

  // 1/sigma = 1/sigma40 - sgn(sigma40) h0^2 int upsilon2 (f^2)* dt
  parallel_for(static_cast<long>(grid.columns()), opt.threads, [&](long col) {
    const int i = static_cast<int>(col / grid.axes[1].n), j = static_cast<int>(col % grid.axes[1].n);
    std::vector<Jet> F(nt), U(nt);
    std::vector<double> src(nt), cum(nt);
    std::array<std::vector<double>, 2> srcx{std::vector<double>(nt), std::vector<double>(nt)};
    std::array<std::vector<double>, 2> cumx{std::vector<double>(nt), std::vector<double>(nt)};
    for (int k = 0; k < nt; ++k) {
      const ChartPoint u = grid.point(i, j, k);
      F[k] = gen.phi.jet(u);
      U[k] = gen.upsilon2.jet(u);
      const double f = F[k].v, ft = F[k].g(2);
      if (ft == 0.0) throw NumericalError("f* vanishes at " + where(grid, i, j, k));
      if (f == 0.0) throw NumericalError("f vanishes at " + where(grid, i, j, k));
      src[k] = 2 * U[k].v * f * ft;
      for (int a = 0; a < 2; ++a)
        srcx[a][k] = 2 * (U[k].g(a) * f * ft + U[k].v * F[k].g(a) * ft + U[k].v * f * F[k].h(a, 2));
    }
    trapezoid(src.data(), nt, dt, cum.data());
    for (int a = 0; a < 2; ++a) trapezoid(srcx[a].data(), nt, dt, cumx[a].data());

    std::vector<double> I(nt), It(nt);
    std::array<std::vector<double>, 2> Ix{std::vector<double>(nt), std::vector<double>(nt)};
    for (int k = 0; k < nt; ++k) {
      const std::size_t p = grid.index(i, j, k);
      const Jet S0 = gen.sigma40.jet(grid.point(i, j, k));
      if (S0.v == 0.0) throw ConfigError("sigma40 must be nonzero at " + where(grid, i, j, k));
      const double sgn = S0.v > 0 ? 1.0 : -1.0;
      const double inv = 1.0 / S0.v - sgn * h02 * cum[k];
      if (inv * sgn <= 0) throw NumericalError("sigma_upsilon blows up near " + where(grid, i, j, k));
      const double sg = 1.0 / inv;
      const double sgt = sgn * h02 * sg * sg * src[k];
      s.sigma_upsilon[p] = sg;
      const double f = F[k].v, ft = F[k].g(2), ftt = F[k].h(2, 2);
      s.h4[p] = f * f;
      c.h4.t[p] = 2 * f * ft;
      c.h4.tt[p] = 2 * ft * ft + 2 * f * ftt;
      s.h3[p] = -h02 * ft * ft * std::abs(sg);
      c.h3.t[p] = -h02 * (2 * ft * ftt * std::abs(sg) + ft * ft * sgn * sgt);
      std::array<double, 2> h3x{}, h4x{};
      for (int a = 0; a < 2; ++a) {
        const double fa = F[k].g(a), fat = F[k].h(a, 2);
        const double sga = sg * sg * (S0.g(a) / (S0.v * S0.v) + sgn * h02 * cumx[a][k]);
        h4x[a] = c.h4.x[a][p] = 2 * f * fa;
        c.h4.xt[a][p] = 2 * (fa * ft + f * fat);
        h3x[a] = c.h3.x[a][p] = -h02 * (2 * ft * fat * std::abs(sg) + ft * ft * sgn * sga);
        if (std::abs(sgt) > relative_tiny(sg)) {
          s.w[a][p] = sga / sgt;
        } else if (std::abs(sga) <= 1e-12 * std::max(1.0, std::abs(sg))) {
          s.w[a][p] = 0.0;
        } else {
          throw NumericalError("w undefined: sigma* = 0 with nonzero d_i sigma at " + where(grid, i, j, k));
        }
      }
      const NIntegrand ni = n_integrand(s.h3[p], c.h3.t[p], h3x, s.h4[p], c.h4.t[p], h4x);
      I[k] = ni.v;
      It[k] = ni.t;
      for (int a = 0; a < 2; ++a) Ix[a][k] = ni.x[a];
    }
    fill_n(s, gen, i, j, I, It, Ix);
  });
  c.h3.tt.clear();
  for (int a = 0; a < 2; ++a) {
    c.h3.xt[a].clear();
    c.w[a] = {};
  }
  check_signs(s, opt);
  attach_psi(s, gen, opt);
  return s;
}

AnsatzSolution generate(Family family, const GeneratingData& gen, const Grid& grid, const GenerateOptions& opt) {
  switch (family) {
    case Family::A: return generate_family_A(gen, grid, opt);
    case Family::Vacuum: return generate_family_vacuum(gen, grid, opt);
    case Family::H3Const: return generate_family_h3const(gen, grid, opt);
    case Family::ConstPhi: return generate_family_constphi(gen, grid, opt);
  }
  throw ConfigError("unknown family");
}

// ---------------------------------------------------------------- derivatives and residuals

void complete_derivatives(FieldDerivatives& d, const GridField& f, const Grid& grid) {
  GridField ft;
  auto need = [&](const GridField& g) { return g.size() != grid.size(); };
  if (need(d.t) || need(d.tt) || need(d.xt[0]) || need(d.xt[1])) ft = diff(f, grid, 2);
  if (need(d.t)) d.t = ft;
  if (need(d.tt)) d.tt = diff2(f, grid, 2);
  for (int a = 0; a < 2; ++a) {
    if (need(d.x[a])) d.x[a] = diff(f, grid, a);
    if (need(d.xt[a])) d.xt[a] = diff(ft, grid, a);
  }
}

FieldDerivatives grid_derivatives(const GridField& f, const Grid& grid) {
  FieldDerivatives d;
  complete_derivatives(d, f, grid);
  return d;
}

Norms norms(const GridField& r) {
  Norms n;
  double s = 0.0;
  for (double v : r) {
    n.max = std::max(n.max, std::abs(v));
    s += v * v;
  }
  n.l2 = r.empty() ? 0.0 : std::sqrt(s / r.size());
  return n;
}

double ResidualReport::max_234() const { return std::max({n2.max, n3.max, n4.max}); }

namespace {

AnsatzSolution::Companions derivative_set(const AnsatzSolution& sol, ResidualMode mode) {
  AnsatzSolution::Companions d;
  if (mode == ResidualMode::Analytic && sol.companions) d = *sol.companions;
  complete_derivatives(d.h3, sol.h3, sol.grid);
  complete_derivatives(d.h4, sol.h4, sol.grid);
  for (int a = 0; a < 2; ++a) {
    complete_derivatives(d.w[a], sol.w[a], sol.grid);
    complete_derivatives(d.n[a], sol.n[a], sol.grid);
  }
  return d;
}

GridField concat(const std::array<GridField, 2>& r) {
  GridField out = r[0];
  out.insert(out.end(), r[1].begin(), r[1].end());
  return out;
}

}  // namespace

ResidualReport residuals(const AnsatzSolution& sol, const GeneratingData& gen, ResidualMode mode,
                         PsiStencil stencil) {
  const Grid& g = sol.grid;
  const auto d = derivative_set(sol, mode);
  ResidualReport rep;
  rep.r2.assign(g.size(), 0.0);
  for (int a = 0; a < 2; ++a) {
    rep.r3[a].assign(g.size(), 0.0);
    rep.r4[a].assign(g.size(), 0.0);
  }
  for (int i = 0; i < g.axes[0].n; ++i)
    for (int j = 0; j < g.axes[1].n; ++j)
      for (int k = 0; k < g.axes[2].n; ++k) {
        const std::size_t p = g.index(i, j, k);
        const double h3 = sol.h3[p], h4 = sol.h4[p];
        if (h3 == 0.0 || h4 == 0.0) throw NumericalError("zero metric coefficient at " + where(g, i, j, k));
        const double h3t = d.h3.t[p], h4t = d.h4.t[p], h4tt = d.h4.tt[p];
        const double bracket = h4tt - h4t * h4t / (2 * h4) - h3t * h4t / (2 * h3);
        const double ups2 = gen.upsilon2(g.point(i, j, k));
        rep.r2[p] = -bracket / (2 * h3 * h4) + ups2;
        const double gamma = 1.5 * h4t / h4 - 0.5 * h3t / h3;
        for (int a = 0; a < 2; ++a) {
          rep.r3[a][p] = sol.w[a][p] / (2 * h4) * bracket +
                         h4t / (4 * h4) * (d.h3.x[a][p] / h3 + d.h4.x[a][p] / h4) - d.h4.xt[a][p] / (2 * h4);
          rep.r4[a][p] = h4 / (2 * h3) * (d.n[a].tt[p] + gamma * d.n[a].t[p]);
        }
      }
  // r1 on the (x1, x2) lattice, boundary rows zero.
  const int nx = g.axes[0].n, ny = g.axes[1].n;
  rep.r1.assign(std::size_t(nx) * ny, 0.0);
  if (!sol.psi.empty()) {
    const Axis &x1 = g.axes[0], &x2 = g.axes[1];
    const Stencil9 w = stencil_weights(stencil, x1.step, x2.step);
    const GridField R = psi_rhs(gen.upsilon4, x1, x2, stencil);
    for (int i = 1; i + 1 < nx; ++i)
      for (int j = 1; j + 1 < ny; ++j) {
        const std::size_t p = std::size_t(i) * ny + j;
        rep.r1[p] = apply_stencil(sol.psi, p, ny, w) - R[p];
      }
  }
  rep.n1 = norms(rep.r1);
  rep.n2 = norms(rep.r2);
  rep.n3 = norms(concat(rep.r3));
  rep.n4 = norms(concat(rep.r4));
  return rep;
}

double LcReport::max() const { return std::max({max_torsion, max_w_curl, max_n_t, max_n_curl}); }

LcReport lc_constraint_check(const AnsatzSolution& sol, ResidualMode mode, double tolerance) {
  const Grid& g = sol.grid;
  const auto d = derivative_set(sol, mode);
  LcReport rep;
  rep.tolerance = tolerance;
  rep.w_curl.assign(g.size(), 0.0);
  rep.n_curl.assign(g.size(), 0.0);
  for (int a = 0; a < 2; ++a) {
    rep.torsion[a].assign(g.size(), 0.0);
    rep.n_t[a].assign(g.size(), 0.0);
  }
  for (std::size_t p = 0; p < g.size(); ++p) {
    const double h4 = sol.h4[p];
    for (int a = 0; a < 2; ++a) {
      const double e_ln_h4 = (d.h4.x[a][p] - sol.w[a][p] * d.h4.t[p]) / h4;
      rep.torsion[a][p] = d.w[a].t[p] - e_ln_h4;
      rep.n_t[a][p] = d.n[a].t[p];
    }
    // e_k w_i = d_k w_i - w_k w_i*
    const double e1w2 = d.w[1].x[0][p] - sol.w[0][p] * d.w[1].t[p];
    const double e2w1 = d.w[0].x[1][p] - sol.w[1][p] * d.w[0].t[p];
    rep.w_curl[p] = e1w2 - e2w1;
    rep.n_curl[p] = d.n[1].x[0][p] - d.n[0].x[1][p];
  }
  rep.max_torsion = std::max(norms(rep.torsion[0]).max, norms(rep.torsion[1]).max);
  rep.max_n_t = std::max(norms(rep.n_t[0]).max, norms(rep.n_t[1]).max);
  rep.max_w_curl = norms(rep.w_curl).max;
  rep.max_n_curl = norms(rep.n_curl).max;
  rep.pass = rep.max() < tolerance;
  return rep;
}

std::array<GridField, 2> check_conformal_condition(const ScalarField& omega, const AnsatzSolution& sol, double y) {
  const Grid& g = sol.grid;
  std::array<GridField, 2> r{GridField(g.size()), GridField(g.size())};
  for (int i = 0; i < g.axes[0].n; ++i)
    for (int j = 0; j < g.axes[1].n; ++j)
      for (int k = 0; k < g.axes[2].n; ++k) {
        ChartPoint u = g.point(i, j, k);
        u[3] = y;
        const Jet om = omega.jet(u);
        const std::size_t p = g.index(i, j, k);
        for (int a = 0; a < 2; ++a) r[a][p] = om.g(a) + sol.w[a][p] * om.g(2) + sol.n[a][p] * om.g(3);
      }
  return r;
}

// ---------------------------------------------------------------- metric assembly

namespace {

// 8-point Gauss-Legendre on 16 equal panels of [a, b].
template <class F>
double gauss_legendre(F&& f, double a, double b) {
  static const double x[4] = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363};
  static const double w[4] = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
  const int panels = 16;
  const double h = (b - a) / panels;
  double s = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double m = a + (p + 0.5) * h, r = h / 2;
    for (int q = 0; q < 4; ++q) s += w[q] * r * (f(m - r * x[q]) + f(m + r * x[q]));
  }
  return s;
}

}  // namespace

geometry::MetricSpec assemble_metric(Family family, const GeneratingData& gen, const AnsatzSolution& sol) {
  using geometry::MetricSpec;
  const Grid& g = sol.grid;
  MetricSpec spec;
  spec.mode = geometry::DerivativeMode::FiniteDifference;
  Table2D tab;
  tab.axes = {0, 1};
  tab.origin = {g.axes[0].start, g.axes[1].start};
  tab.spacing = {g.axes[0].step, g.axes[1].step};
  tab.shape = {g.axes[0].n, g.axes[1].n};
  tab.values = sol.psi;
  const ScalarField psi = tabulated(tab);
  spec.g1 = ScalarField::from_value([psi](const ChartPoint& u) { return std::exp(psi(u)); });
  spec.g2 = spec.g1;
  const double t0 = g.axes[2].start;

  if (family == Family::A) {
    int sg = gen.sign;
    if (sg == 0) sg = -1;
    // h4 and the n integral by RK4 on a fixed number of steps from t0.
    struct Vals {
      double h3, h4;
      double nint;
    };
    auto eval = [gen, sg, t0](const ChartPoint& u) {
      auto q_at = [&](double t) {
        const ChartPoint v{u[0], u[1], t, u[3]};
        const Jet P = gen.phi.jet(v);
        return std::pair<Jet, double>{P, gen.upsilon2(v)};
      };
      auto h3_of = [&](double t, double h4) {
        const auto [P, U] = q_at(t);
        const double h4t = 2 * sg * 2 * P.g(2) * std::exp(2 * P.v) / U;
        return h4t * P.g(2) / (2 * U * h4);
      };
      auto qv = [&](double t) {
        const auto [P, U] = q_at(t);
        return 2 * P.g(2) * std::exp(2 * P.v) / U;
      };
      const int steps = 256;
      const double h = (u[2] - t0) / steps;
      double H = gen.h4_0(u), N = 0.0, t = t0;
      auto rhs = [&](double tt, double HH) {
        const double dH = 2 * sg * qv(tt);
        const double a = std::abs(HH);
        return std::pair<double, double>{dH, std::sqrt(std::abs(h3_of(tt, HH))) / (a * std::sqrt(a))};
      };
      for (int s = 0; s < steps; ++s) {
        const auto k1 = rhs(t, H);
        const auto k2 = rhs(t + h / 2, H + h / 2 * k1.first);
        const auto k3 = rhs(t + h / 2, H + h / 2 * k2.first);
        const auto k4 = rhs(t + h, H + h * k3.first);
        H += h / 6 * (k1.first + 2 * k2.first + 2 * k3.first + k4.first);
        N += h / 6 * (k1.second + 2 * k2.second + 2 * k3.second + k4.second);
        t += h;
      }
      return Vals{h3_of(u[2], H), H, N};
    };
    spec.h3 = ScalarField::from_value([eval](const ChartPoint& u) { return eval(u).h3; });
    spec.h4 = ScalarField::from_value([eval](const ChartPoint& u) { return eval(u).h4; });
    for (int a = 0; a < 2; ++a) {
      spec.N[0][a] = ScalarField::from_value([gen, a](const ChartPoint& u) {
        const Jet P = gen.phi.jet(u);
        return P.g(a) / P.g(2);
      });
      spec.N[1][a] = ScalarField::from_value([gen, a, eval](const ChartPoint& u) {
        return gen.n1[a](u) + gen.n2[a](u) * eval(u).nint;
      });
    }
    return spec;
  }
  if (family == Family::Vacuum) {
    if (gen.h3_samples) throw ConfigError("assemble_metric needs a closed-form h3");
    spec.h3 = gen.h3;
    spec.h4 = ScalarField::from_value([gen](const ChartPoint& u) { return gen.h4_0({u[0], u[1], 0.0, 0.0}); });
    for (int a = 0; a < 2; ++a) {
      spec.N[0][a] = gen.w[a];
      spec.N[1][a] = ScalarField::from_value([gen, a, t0](const ChartPoint& u) {
        const ChartPoint x{u[0], u[1], 0.0, 0.0};
        const double a = std::abs(gen.h4_0(x)), scale = 1.0 / (a * std::sqrt(a));
        const double in = gauss_legendre(
            [&](double t) { return std::sqrt(std::abs(gen.h3({u[0], u[1], t, u[3]}))) * scale; }, t0, u[2]);
        return gen.n1[a](u) + gen.n2[a](u) * in;
      });
    }
    return spec;
  }
  throw ConfigError("assemble_metric supports the A and vacuum families");
}

}  // namespace nhdiff::ansatz
