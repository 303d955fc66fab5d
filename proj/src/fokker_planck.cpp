#include "nhdiff/fokker_planck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nhdiff/field.hpp"
#include "nhdiff/parallel.hpp"

namespace nhdiff::fp {

namespace {
constexpr double kCourant = 0.4;
using Triplet = Eigen::Triplet<double>;
using Offset = std::array<int, 4>;
}  // namespace

Lattice Lattice::box(std::vector<int> axes, std::vector<double> lo, std::vector<double> hi, std::vector<int> shape,
                     Boundary b) {
  Lattice l;
  l.axes = std::move(axes);
  l.origin = lo;
  l.shape = std::move(shape);
  l.boundary = b;
  l.spacing.resize(l.axes.size());
  for (std::size_t d = 0; d < l.axes.size(); ++d) {
    // Periodic boxes exclude the right end, which is the image of the left one.
    const int cells = b == Boundary::Periodic ? l.shape[d] : l.shape[d] - 1;
    l.spacing[d] = (hi[d] - lo[d]) / cells;
  }
  return l;
}

std::size_t Lattice::size() const {
  std::size_t n = 1;
  for (int s : shape) n *= s;
  return n;
}

std::array<int, 4> Lattice::multi(std::size_t idx) const {
  std::array<int, 4> m{0, 0, 0, 0};
  for (int d = dims() - 1; d >= 0; --d) {
    m[d] = static_cast<int>(idx % shape[d]);
    idx /= shape[d];
  }
  return m;
}

std::size_t Lattice::index(const std::array<int, 4>& m) const {
  std::size_t idx = 0;
  for (int d = 0; d < dims(); ++d) idx = idx * shape[d] + m[d];
  return idx;
}

ChartPoint Lattice::point(std::size_t idx) const {
  ChartPoint u = base;
  const auto m = multi(idx);
  for (int d = 0; d < dims(); ++d) u[axes[d]] = origin[d] + spacing[d] * m[d];
  return u;
}

double Lattice::cell_volume() const {
  double v = 1.0;
  for (double h : spacing) v *= h;
  return v;
}

std::size_t Lattice::nearest(const ChartPoint& u) const {
  std::array<int, 4> m{0, 0, 0, 0};
  for (int d = 0; d < dims(); ++d) {
    long k = std::lround((u[axes[d]] - origin[d]) / spacing[d]);
    if (boundary == Boundary::Periodic)
      k = ((k % shape[d]) + shape[d]) % shape[d];
    else
      k = std::clamp<long>(k, 0, shape[d] - 1);
    m[d] = static_cast<int>(k);
  }
  return index(m);
}

void Lattice::validate() const {
  if (axes.empty() || axes.size() > 4) throw ConfigError("lattice needs 1 to 4 axes");
  if (origin.size() != axes.size() || spacing.size() != axes.size() || shape.size() != axes.size())
    throw ConfigError("lattice axes, origin, spacing and shape must have equal length");
  for (std::size_t d = 0; d < axes.size(); ++d) {
    if (axes[d] < 0 || axes[d] > 3) throw ConfigError("lattice axis out of range");
    for (std::size_t e = 0; e < d; ++e)
      if (axes[e] == axes[d]) throw ConfigError("lattice axes must be distinct");
    if (shape[d] < 8) throw ConfigError("grid too coarse: at least 8 nodes per axis are required");
    if (!(spacing[d] > 0.0)) throw ConfigError("lattice spacing must be positive");
  }
}

namespace {

// Neighbour of node m shifted by off, or -1 outside an absorbing lattice.
long neighbour(const Lattice& lat, std::array<int, 4> m, const Offset& off) {
  for (int d = 0; d < lat.dims(); ++d) {
    int k = m[d] + off[d];
    if (k < 0 || k >= lat.shape[d]) {
      if (lat.boundary == Boundary::Absorbing) return -1;
      k = (k % lat.shape[d] + lat.shape[d]) % lat.shape[d];
    }
    m[d] = k;
  }
  return static_cast<long>(lat.index(m));
}

struct StencilEntry {
  Offset off;
  double w;
};

// Central second-order stencil of a^{mn} d_m d_n + c^m d_m restricted to the lattice axes.
std::vector<StencilEntry> stencil(const Lattice& lat, const geometry::SecondOrderOperator& op) {
  std::vector<StencilEntry> out;
  const int D = lat.dims();
  double centre = 0.0;
  for (int p = 0; p < D; ++p) {
    const int P = lat.axes[p];
    const double hp = lat.spacing[p];
    Offset plus{0, 0, 0, 0};
    plus[p] = 1;
    Offset minus{0, 0, 0, 0};
    minus[p] = -1;
    const double app = op.a(P, P) / (hp * hp);
    const double cp = op.c(P) / (2 * hp);
    out.push_back({plus, app + cp});
    out.push_back({minus, app - cp});
    centre -= 2 * app;
    for (int q = p + 1; q < D; ++q) {
      const int Q = lat.axes[q];
      const double apq = (op.a(P, Q) + op.a(Q, P)) / (4 * hp * lat.spacing[q]);
      for (int sp : {1, -1})
        for (int sq : {1, -1}) {
          Offset o{0, 0, 0, 0};
          o[p] = sp;
          o[q] = sq;
          out.push_back({o, sp * sq * apq});
        }
    }
  }
  out.push_back({Offset{0, 0, 0, 0}, centre});
  return out;
}

Offset negate(Offset o) {
  for (int& k : o) k = -k;
  return o;
}

void fill_bounds(Generator& g) {
  const Lattice& lat = g.lattice;
  const int D = lat.dims();
  g.max_diffusion = 0.0;
  g.max_advection = 0.0;
  for (const auto& op : g.coefficients) {
    Eigen::MatrixXd a(D, D);
    double adv = 0.0;
    for (int p = 0; p < D; ++p) {
      for (int q = 0; q < D; ++q)
        a(p, q) = 0.5 * (op.a(lat.axes[p], lat.axes[q]) + op.a(lat.axes[q], lat.axes[p])) /
                  (lat.spacing[p] * lat.spacing[q]);
      adv += std::abs(op.c(lat.axes[p])) / lat.spacing[p];
    }
    const double lam = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
    g.max_diffusion = std::max(g.max_diffusion, lam);
    g.max_advection = std::max(g.max_advection, adv);
  }
}

// Matrix whose row r applies the stencil with the coefficients of node r.
SparseRM assemble(const Lattice& lat, const std::vector<geometry::SecondOrderOperator>& coef) {
  std::vector<Triplet> t;
  const std::size_t n = lat.size();
  for (std::size_t r = 0; r < n; ++r) {
    const auto m = lat.multi(r);
    for (const auto& e : stencil(lat, coef[r])) {
      const long j = neighbour(lat, m, e.off);
      if (j >= 0 && e.w != 0.0) t.emplace_back(r, j, e.w);
    }
  }
  SparseRM M(n, n);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

// Row r applies the stencils of the neighbours to the product with phi:
// sum_j L(j, r) w_j / w_r phi_j, i.e. the weighted adjoint written in divergence form.
SparseRM assemble_adjoint(const Lattice& lat, const std::vector<geometry::SecondOrderOperator>& coef,
                          const Eigen::VectorXd& w) {
  std::vector<Triplet> t;
  const std::size_t n = lat.size();
  for (std::size_t r = 0; r < n; ++r) {
    const auto m = lat.multi(r);
    // Offsets of the stencil do not depend on the coefficients; evaluate each
    // neighbour's stencil and pick the entry pointing back at r.
    for (const auto& e : stencil(lat, coef[r])) {
      const long j = neighbour(lat, m, negate(e.off));
      if (j < 0) continue;
      for (const auto& ej : stencil(lat, coef[j]))
        if (ej.off == e.off && ej.w != 0.0) t.emplace_back(r, j, ej.w * w[j] / w[r]);
    }
  }
  SparseRM M(n, n);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

// Sigma of a system as a 4 x K block of N-adapted components at a chart point.
struct ChartSystem {
  const sde::SDESystem& sys;
  const Lattice& lat;
  bool full;
  ChartSystem(const sde::SDESystem& s, const Lattice& l) : sys(s), lat(l), full(s.state_dim == 4) {
    sys.validate();
    if (!full && sys.state_dim != lat.dims())
      throw ConfigError("system state dimension must be 4 or equal the lattice dimension");
  }
  sde::State state(const ChartPoint& u) const {
    sde::State s(sys.state_dim);
    for (int k = 0; k < sys.state_dim; ++k) s(k) = full ? u[k] : u[lat.axes[k]];
    return s;
  }
  Eigen::Matrix<double, 4, Eigen::Dynamic> sigma(const ChartPoint& u) const {
    const sde::NoiseMatrix s = sys.sigma(0.0, state(u));
    Eigen::Matrix<double, 4, Eigen::Dynamic> out = Eigen::Matrix<double, 4, Eigen::Dynamic>::Zero(4, sys.noise_dim);
    for (int k = 0; k < sys.state_dim; ++k) out.row(full ? k : lat.axes[k]) = s.row(k);
    return out;
  }
  Vec4 drift(const ChartPoint& u) const {
    const sde::State b = sys.drift(0.0, state(u));
    Vec4 out = Vec4::Zero();
    for (int k = 0; k < sys.state_dim; ++k) out(full ? k : lat.axes[k]) = b(k);
    return out;
  }
};

// Coordinate form of sum A^{ab} e_a e_b + B^a e_a at a sample.
geometry::SecondOrderOperator to_coordinates(const geometry::MetricSample& s, const Mat4& A, const Vec4& B) {
  const Mat4 E = geometry::n_adapted_frame(s).E;
  geometry::SecondOrderOperator op;
  op.a = E.transpose() * A * E;
  op.c = E.transpose() * B;
  // e_a applied to the coordinate components of e_b: only d_m of -N^c_j survives.
  for (int a = 0; a < 4; ++a)
    for (int j = 0; j < 2; ++j) {
      if (A(a, j) == 0.0) continue;
      for (int c = 0; c < 2; ++c) {
        double d = 0.0;
        for (int m = 0; m < 4; ++m) d += E(a, m) * s.dN[m](c, j);
        op.c(2 + c) -= A(a, j) * d;
      }
    }
  return op;
}

Generator finish(const Lattice& lat, GeneratorKind kind, std::vector<geometry::SecondOrderOperator> coef,
                 Eigen::VectorXd weight) {
  Generator g;
  g.lattice = lat;
  g.kind = kind;
  g.coefficients = std::move(coef);
  g.matrix = assemble(lat, g.coefficients);
  g.weight = std::move(weight);
  fill_bounds(g);
  return g;
}

Generator build_sde_generator(const sde::SDESystem& sys, const geometry::MetricSpec& spec, const Lattice& lat,
                              double rho, bool stratonovich) {
  lat.validate();
  spec.validate();
  if (!(rho >= 0.0)) throw ConfigError("rho must be non-negative");
  const ChartSystem cs(sys, lat);
  std::vector<geometry::SecondOrderOperator> coef(lat.size());
  for (std::size_t r = 0; r < lat.size(); ++r) {
    const ChartPoint u = lat.point(r);
    const geometry::MetricSample s = geometry::sample(spec, u);
    const auto sig = cs.sigma(u);
    const Mat4 A = 0.5 * rho * sig * sig.transpose();
    Vec4 B = cs.drift(u);
    if (stratonovich) {
      // (rho/2) sigma^a (e_a sigma^b) e_b from L_k L_k.
      const Mat4 E = geometry::n_adapted_frame(s).E;
      Vec4 extra = Vec4::Zero();
      for (int m = 0; m < 4; ++m) {
        ChartPoint p = u, q = u;
        const double h = fd_step(u[m]);
        p[m] += h;
        q[m] -= h;
        const auto dsig = ((cs.sigma(p) - cs.sigma(q)) / (p[m] - q[m])).eval();  // d_m sigma
        // sum_k sigma^a_k E(a, m) d_m sigma^b_k
        for (int k = 0; k < sys.noise_dim; ++k) extra += sig.col(k).dot(E.col(m)) * dsig.col(k);
      }
      B += 0.5 * rho * extra;
    }
    coef[r] = to_coordinates(s, A, B);
  }
  Eigen::VectorXd w = Eigen::VectorXd::Constant(lat.size(), lat.cell_volume());
  return finish(lat, stratonovich ? GeneratorKind::Stratonovich : GeneratorKind::Ito, std::move(coef), std::move(w));
}

}  // namespace

Eigen::VectorXd Generator::apply(const Eigen::VectorXd& f, int threads) const {
  if (f.size() != matrix.cols()) throw ConfigError("grid function has the wrong size");
  Eigen::VectorXd out(matrix.rows());
  const long rows = matrix.rows();
  const long blocks = std::min<long>(rows, 64L * std::max(1, threads));
  parallel_for(blocks, threads, [&](long b) {
    const long lo = rows * b / blocks, hi = rows * (b + 1) / blocks;
    for (long r = lo; r < hi; ++r) {
      double s = 0.0;
      for (SparseRM::InnerIterator it(matrix, r); it; ++it) s += it.value() * f[it.col()];
      out[r] = s;
    }
  });
  return out;
}

double Generator::stable_dt() const {
  double dt = std::numeric_limits<double>::infinity();
  if (max_diffusion > 0) dt = std::min(dt, kCourant / (2 * max_diffusion));
  if (max_advection > 0) dt = std::min(dt, kCourant / max_advection);
  return dt;
}

Generator build_generator_ito(const sde::SDESystem& sys, const geometry::MetricSpec& spec, const Lattice& lat,
                              double rho) {
  return build_sde_generator(sys, spec, lat, rho, false);
}

Generator build_generator_strat(const sde::SDESystem& sys, const geometry::MetricSpec& spec, const Lattice& lat,
                                double rho) {
  return build_sde_generator(sys, spec, lat, rho, true);
}

Generator adjoint(const Generator& g) {
  Generator out = g;
  out.kind = GeneratorKind::Adjoint;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.lattice.size());
  out.matrix = assemble_adjoint(g.lattice, g.coefficients, ones);
  return out;
}

Generator build_backward_generator(const geometry::MetricSpec& spec, const DriftField& drift, double rho,
                                   const Lattice& lat) {
  lat.validate();
  spec.validate();
  if (!(rho >= 0.0)) throw ConfigError("rho must be non-negative");
  std::vector<geometry::SecondOrderOperator> coef(lat.size());
  for (std::size_t r = 0; r < lat.size(); ++r) {
    const ChartPoint u = lat.point(r);
    const geometry::MetricSample s = geometry::sample(spec, u);
    geometry::SecondOrderOperator op = geometry::laplace_beltrami_operator(s);
    op.a *= 0.5 * rho;
    op.c *= 0.5 * rho;
    if (drift) op.c += geometry::n_adapted_frame(s).E.transpose() * drift(u);
    coef[r] = op;
  }
  return finish(lat, GeneratorKind::Backward, std::move(coef), metric_weight(spec, lat));
}

Generator forward_generator(const Generator& backward) {
  Generator out = backward;
  out.kind = GeneratorKind::Forward;
  out.matrix = assemble_adjoint(backward.lattice, backward.coefficients, backward.weight);
  return out;
}

double inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g, const Eigen::VectorXd& w) {
  return (f.array() * g.array() * w.array()).sum();
}

double duality_residual(const Generator& A, const Generator& B, const Eigen::VectorXd& f, const Eigen::VectorXd& phi,
                        const Eigen::VectorXd& w) {
  const Eigen::VectorXd Af = A.apply(f), Bphi = B.apply(phi);
  auto nrm = [&](const Eigen::VectorXd& x) { return std::sqrt(inner(x, x, w)); };
  const double scale = nrm(Af) * nrm(phi) + nrm(f) * nrm(Bphi);
  return std::abs(inner(Af, phi, w) - inner(f, Bphi, w)) / (scale > 0 ? scale : 1.0);
}

Eigen::VectorXd sample_on(const Lattice& lat, const std::function<double(const ChartPoint&)>& f) {
  Eigen::VectorXd v(lat.size());
  for (std::size_t r = 0; r < lat.size(); ++r) v[r] = f(lat.point(r));
  return v;
}

namespace {

struct Stepper {
  long steps;
  double dt;
};

Stepper plan(const Generator& gen, double tau_end, double dt) {
  if (!(tau_end >= 0.0)) throw ConfigError("tau_end must be non-negative");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const long n = tau_end == 0.0 ? 0 : static_cast<long>(std::ceil(tau_end / dt - 1e-9));
  const double h = n > 0 ? tau_end / n : dt;
  const double limit = gen.stable_dt();
  if (h > limit)
    throw NumericalError("time step " + std::to_string(h) + " exceeds the explicit stability bound " +
                         std::to_string(limit));
  return {n, h};
}

void rk2(const Generator& gen, Eigen::VectorXd& f, double dt, int threads) {
  const Eigen::VectorXd k1 = gen.apply(f, threads);
  const Eigen::VectorXd k2 = gen.apply(f + dt * k1, threads);
  f += 0.5 * dt * (k1 + k2);
}

}  // namespace

Eigen::VectorXd kolmogorov_backward_evolve(const Generator& gen, const Eigen::VectorXd& f0, double tau_end,
                                           double dt, int threads) {
  const Stepper st = plan(gen, tau_end, dt);
  Eigen::VectorXd f = f0;
  for (long n = 0; n < st.steps; ++n) {
    rk2(gen, f, st.dt, threads);
    if (!f.allFinite()) throw NumericalError("backward evolution produced non-finite values");
  }
  return f;
}

Eigen::VectorXd metric_weight(const geometry::MetricSpec& spec, const Lattice& lat) {
  Eigen::VectorXd w(lat.size());
  for (std::size_t r = 0; r < lat.size(); ++r) {
    const geometry::MetricSample s = geometry::sample(spec, lat.point(r));
    w[r] = std::sqrt(std::abs(s.d.prod())) * lat.cell_volume();
  }
  return w;
}

DensityGrid point_mass(const Lattice& lat, const Eigen::VectorXd& weight, const ChartPoint& u) {
  DensityGrid d{lat, Eigen::VectorXd::Zero(lat.size()), weight};
  const std::size_t r = lat.nearest(u);
  d.values[r] = 1.0 / weight[r];
  return d;
}

EvolveReport evolve_density(const Generator& forward, const DensityGrid& phi0, double tau_end, double dt,
                            int threads) {
  if (phi0.values.size() != static_cast<long>(forward.lattice.size()))
    throw ConfigError("density does not match the generator lattice");
  const Stepper st = plan(forward, tau_end, dt);
  EvolveReport rep;
  rep.density = phi0;
  rep.steps = st.steps;
  rep.dt = st.dt;
  rep.min_before_clamp = phi0.values.minCoeff();
  const double m0 = phi0.mass();
  Eigen::VectorXd& f = rep.density.values;
  for (long n = 0; n < st.steps; ++n) {
    rk2(forward, f, st.dt, threads);
    if (!f.allFinite()) throw NumericalError("density evolution produced non-finite values");
    rep.min_before_clamp = std::min(rep.min_before_clamp, f.minCoeff());
    for (long i = 0; i < f.size(); ++i)
      if (f[i] < -1e-12) {
        f[i] = 0.0;
        ++rep.clamped;
      }
    rep.mass_history.push_back(rep.density.mass());
  }
  if (forward.lattice.boundary == Boundary::Periodic && tau_end > 0 && rep.clamped == 0) {
    const double drift = std::abs(rep.density.mass() - m0) / tau_end;
    if (drift > 1e-6) throw NumericalError("mass drift " + std::to_string(drift) + " per unit tau");
  }
  return rep;
}

EvolveReport fokker_planck_evolve(const geometry::MetricSpec& spec, const DriftField& drift, double rho,
                                  const DensityGrid& phi0, double tau_end, double dt, int threads) {
  const Generator fwd = forward_generator(build_backward_generator(spec, drift, rho, phi0.lattice));
  DensityGrid start = phi0;
  start.weight = fwd.weight;
  return evolve_density(fwd, start, tau_end, dt, threads);
}

McComparison compare_with_monte_carlo(const sde::SDESystem& sys, const Lattice& lat, double rho, double tau,
                                      long paths, std::uint64_t seed, int bins, double mc_dt, int threads) {
  lat.validate();
  if (lat.dims() != 2 || lat.boundary != Boundary::Periodic || sys.state_dim != 2)
    throw ConfigError("Monte Carlo comparison needs a 2-d system on a periodic 2-d lattice");
  if (bins <= 0 || lat.shape[0] % bins != 0 || lat.shape[1] % bins != 0)
    throw ConfigError("histogram bins must divide the lattice shape");

  const Generator fwd = adjoint(build_generator_ito(sys, geometry::MetricSpec::flat(), lat, rho));
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(lat.size(), lat.cell_volume());
  const ChartPoint start = lat.point(lat.nearest(lat.base));
  const EvolveReport rep = evolve_density(fwd, point_mass(lat, w, start), tau, 0.9 * fwd.stable_dt(), threads);

  // Node cells [x_i - h/2, x_i + h/2) grouped in blocks of shape / bins.
  const int per0 = lat.shape[0] / bins, per1 = lat.shape[1] / bins;
  Eigen::MatrixXd p_fp = Eigen::MatrixXd::Zero(bins, bins), p_mc = Eigen::MatrixXd::Zero(bins, bins);
  for (std::size_t r = 0; r < lat.size(); ++r) {
    const auto m = lat.multi(r);
    p_fp(m[0] / per0, m[1] / per1) += rep.density.values[r] * w[r];
  }

  sde::IntegrationOptions opt;
  opt.wiener.rho = rho;
  opt.wiener.dim = sys.noise_dim;
  opt.wiener.seed = seed;
  opt.wiener.steps = std::max<long>(1, std::lround(tau / mc_dt));
  opt.wiener.dt = tau / opt.wiener.steps;
  opt.paths = paths;
  opt.threads = threads;
  opt.u0 = sde::State::Zero(2);
  opt.u0 << start[lat.axes[0]], start[lat.axes[1]];
  const sde::PathEnsemble ens = sde::integrate_ito(sys, opt);
  for (long p = 0; p < paths; ++p) {
    int cell[2];
    for (int d = 0; d < 2; ++d) {
      const double x = (ens.terminal_at(p, d) - lat.origin[d]) / lat.spacing[d] + 0.5;
      const long k = static_cast<long>(std::floor(x));
      cell[d] = static_cast<int>(((k % lat.shape[d]) + lat.shape[d]) % lat.shape[d]) / (d == 0 ? per0 : per1);
    }
    p_mc(cell[0], cell[1]) += 1.0 / paths;
  }

  McComparison out;
  out.l1 = (p_fp - p_mc).cwiseAbs().sum();
  out.mass_error = std::abs(rep.density.mass() - 1.0);
  out.min_before_clamp = rep.min_before_clamp;
  out.paths = paths;
  return out;
}

Eigen::VectorXd h_diffusion_solve(const Lattice& lat, const ScalarField& psi, const Eigen::VectorXd& f0,
                                  double tau_end, double rho, double dt) {
  lat.validate();
  if (lat.dims() != 2 || lat.axes[0] != 0 || lat.axes[1] != 1)
    throw ConfigError("h-diffusion runs on an (x1, x2) lattice");
  if (!(rho > 0.0)) throw ConfigError("rho must be positive");
  std::vector<geometry::SecondOrderOperator> coef(lat.size());
  for (std::size_t r = 0; r < lat.size(); ++r) {
    const double k = 0.5 * rho * std::exp(-psi(lat.point(r)));
    coef[r].a(0, 0) = k;
    coef[r].a(1, 1) = k;
  }
  const Generator g =
      finish(lat, GeneratorKind::Backward, std::move(coef), Eigen::VectorXd::Constant(lat.size(), lat.cell_volume()));
  if (dt <= 0.0) dt = 0.9 * g.stable_dt();
  return kolmogorov_backward_evolve(g, f0, tau_end, dt);
}

std::size_t VelocityLattice::size() const {
  std::size_t s = 1;
  for (int d = 0; d < dims; ++d) s *= n;
  return s;
}

Eigen::Vector3d VelocityLattice::velocity(std::size_t idx) const {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  for (int d = dims - 1; d >= 0; --d) {
    v(d) = lo + spacing() * static_cast<double>(idx % n);
    idx /= n;
  }
  return v;
}

void VelocityLattice::validate() const {
  if (dims != 1 && dims != 3) throw ConfigError("velocity lattice must be 1-d or 3-d");
  if (n < 8) throw ConfigError("grid too coarse: at least 8 nodes per axis are required");
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo))
    throw ConfigError("velocity lattice must span a finite interval");
}

namespace {

// sqrt|h| h^{-1} of the hyperbolic fiber metric: |h| = 1 / v_time^2, h^{-1} = 1 + v v^T.
Eigen::Matrix3d flux_tensor(const Eigen::Vector3d& v) {
  const double vt = std::sqrt(1.0 + v.squaredNorm());
  return (Eigen::Matrix3d::Identity() + v * v.transpose()) / vt;
}

}  // namespace

Generator build_velocity_laplacian(const VelocityLattice& lat) {
  lat.validate();
  const int D = lat.dims;
  const int n = lat.n;
  const double h = lat.spacing();
  const std::size_t N = lat.size();
  std::array<int, 3> stride{1, 1, 1};
  for (int d = D - 2; d >= 0; --d) stride[d] = stride[d + 1] * n;
  auto coord = [&](std::size_t idx, int d) { return static_cast<int>((idx / stride[d]) % n); };

  std::vector<Triplet> t;
  Eigen::VectorXd sqrt_h(N);
  for (std::size_t r = 0; r < N; ++r) {
    const Eigen::Vector3d v = lat.velocity(r);
    sqrt_h[r] = 1.0 / std::sqrt(1.0 + v.squaredNorm());
    for (int e = 0; e < D; ++e) {
      // Face fluxes K^{ee} (f_{r+1} - f_r) / h^2, Dirichlet zero beyond the ends.
      for (int s : {1, -1}) {
        Eigen::Vector3d face = v;
        face(e) += 0.5 * s * h;
        const double K = flux_tensor(face)(e, e) / (h * h);
        const int k = coord(r, e) + s;
        if (k >= 0 && k < n) t.emplace_back(r, r + s * stride[e], K);
        t.emplace_back(r, r, -K);
      }
      // Cross terms D_e diag(K^{em}) D_m with central differences.
      for (int m = 0; m < D; ++m) {
        if (m == e) continue;
        for (int se : {1, -1}) {
          const int ke = coord(r, e) + se;
          if (ke < 0 || ke >= n) continue;
          const std::size_t q = r + se * stride[e];
          const double K = flux_tensor(lat.velocity(q))(e, m) / (4 * h * h);
          for (int sm : {1, -1}) {
            const int km = coord(q, m) + sm;
            if (km < 0 || km >= n) continue;
            t.emplace_back(r, q + sm * stride[m], se * sm * K);
          }
        }
      }
    }
  }
  SparseRM S(N, N);
  S.setFromTriplets(t.begin(), t.end());
  Generator g;
  g.kind = GeneratorKind::Velocity;
  g.lattice.axes.resize(D);
  for (int d = 0; d < D; ++d) {
    g.lattice.axes[d] = d;
    g.lattice.origin.push_back(lat.lo);
    g.lattice.spacing.push_back(h);
    g.lattice.shape.push_back(n);
  }
  g.lattice.boundary = Boundary::Absorbing;
  g.matrix = (sqrt_h.cwiseInverse().asDiagonal() * S).eval();
  g.weight = sqrt_h * std::pow(h, D);
  // Diffusion bound from the largest eigenvalue of h^{-1} on the lattice.
  double lam = 0.0;
  for (std::size_t r = 0; r < N; ++r) lam = std::max(lam, 1.0 + lat.velocity(r).squaredNorm());
  g.max_diffusion = D * lam / (h * h);
  return g;
}

}  // namespace nhdiff::fp
