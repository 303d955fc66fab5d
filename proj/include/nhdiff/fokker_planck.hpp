#pragma once

#include <array>
#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "nhdiff/geometry.hpp"
#include "nhdiff/sde.hpp"
#include "nhdiff/types.hpp"

namespace nhdiff::fp {

enum class Boundary { Periodic, Absorbing };

// Node lattice over a subset of the chart axes; the remaining chart
// coordinates are frozen at `base`. Periodic lattices have period shape * spacing.
struct Lattice {
  std::vector<int> axes;
  std::vector<double> origin, spacing;
  std::vector<int> shape;
  ChartPoint base{};
  Boundary boundary = Boundary::Periodic;

  static Lattice box(std::vector<int> axes, std::vector<double> lo, std::vector<double> hi, std::vector<int> shape,
                     Boundary b = Boundary::Periodic);
  int dims() const { return static_cast<int>(axes.size()); }
  std::size_t size() const;
  std::array<int, 4> multi(std::size_t idx) const;  // last axis fastest
  std::size_t index(const std::array<int, 4>& m) const;
  ChartPoint point(std::size_t idx) const;
  double coordinate(std::size_t idx, int d) const { return origin[d] + spacing[d] * multi(idx)[d]; }
  double cell_volume() const;
  // Nearest node, wrapping periodic axes.
  std::size_t nearest(const ChartPoint& u) const;
  void validate() const;  // at least 8 nodes per axis
};

using SparseRM = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class GeneratorKind { Ito, Stratonovich, Adjoint, Backward, Forward, Velocity };

struct Generator {
  Lattice lattice;
  GeneratorKind kind = GeneratorKind::Ito;
  SparseRM matrix;
  // Per-node coordinate coefficients a^{mn} d_m d_n + c^m d_m the matrix discretizes.
  std::vector<geometry::SecondOrderOperator> coefficients;
  Eigen::VectorXd weight;  // quadrature weight per node (cell volume, times sqrt|g| where relevant)
  double max_diffusion = 0.0;  // max eigenvalue of a_pq / (h_p h_q)
  double max_advection = 0.0;  // max of sum_p |c_p| / h_p

  Eigen::VectorXd apply(const Eigen::VectorXd& f, int threads = 1) const;
  // Explicit RK2 bound: C / (2 max_diffusion) and C / max_advection with C = 0.4.
  double stable_dt() const;
};

// Itô generator (rho/2) sigma sigma^T e e + b e with the system drift read as the Itô drift.
// Systems of state dimension 4 act on the chart; otherwise state_dim must equal
// the lattice dimension and the state is the lattice coordinates.
Generator build_generator_ito(const sde::SDESystem& sys, const geometry::MetricSpec& spec, const Lattice& lat,
                              double rho);
// (rho/2) sum L_k L_k + L_0 with L_k = sigma_k^b e_b and the system drift read as the Stratonovich drift.
Generator build_generator_strat(const sde::SDESystem& sys, const geometry::MetricSpec& spec, const Lattice& lat,
                                double rho);
// Formal adjoint in the unweighted inner product: (rho/2) d d (a phi) - d (c phi),
// discretized by applying the same stencils to the products.
Generator adjoint(const Generator& g);

// (rho/2) Laplace-Beltrami of the canonical d-connection plus A^nu e_nu.
using DriftField = std::function<Vec4(const ChartPoint&)>;
Generator build_backward_generator(const geometry::MetricSpec& spec, const DriftField& drift, double rho,
                                   const Lattice& lat);
// Adjoint of a backward generator in the sqrt|g|-weighted inner product.
Generator forward_generator(const Generator& backward);

// <f, g> with the generator's quadrature weights (or cell volumes when unweighted).
double inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g, const Eigen::VectorXd& w);
// |<A f, phi> - <f, B phi>| / (|A f| |phi| + |f| |B phi|) in the weight w.
double duality_residual(const Generator& A, const Generator& B, const Eigen::VectorXd& f, const Eigen::VectorXd& phi,
                        const Eigen::VectorXd& w);

Eigen::VectorXd sample_on(const Lattice& lat, const std::function<double(const ChartPoint&)>& f);

// df/dtau = A f by explicit RK2. dt is reduced to divide tau_end evenly.
Eigen::VectorXd kolmogorov_backward_evolve(const Generator& gen, const Eigen::VectorXd& f0, double tau_end,
                                           double dt, int threads = 1);

struct DensityGrid {
  Lattice lattice;
  Eigen::VectorXd values;
  Eigen::VectorXd weight;  // sqrt|g| times cell volume
  double mass() const { return values.dot(weight); }
};
// Unit mass in the single node nearest to u (mollified delta).
DensityGrid point_mass(const Lattice& lat, const Eigen::VectorXd& weight, const ChartPoint& u);
Eigen::VectorXd metric_weight(const geometry::MetricSpec& spec, const Lattice& lat);

struct EvolveReport {
  DensityGrid density;
  std::vector<double> mass_history;  // after every step
  double min_before_clamp = 0.0;
  long clamped = 0;  // node updates clamped from below -1e-12 to 0
  long steps = 0;
  double dt = 0.0;
};
// Evolves a density with a forward generator. Under periodic boundaries a mass
// drift above 1e-6 per unit tau is a NumericalError.
EvolveReport evolve_density(const Generator& forward, const DensityGrid& phi0, double tau_end, double dt,
                            int threads = 1);
EvolveReport fokker_planck_evolve(const geometry::MetricSpec& spec, const DriftField& drift, double rho,
                                  const DensityGrid& phi0, double tau_end, double dt, int threads = 1);

// Point mass at the origin node evolved with the adjoint of the Itô generator of
// a flat 2-d system, against an Euler-Maruyama histogram of the same system
// wrapped onto the periodic lattice. Both are aggregated onto bins x bins cells.
struct McComparison {
  double l1 = 0.0;          // sum over bins of |p_fp - p_mc|
  double mass_error = 0.0;  // |mass(tau) - 1|
  double min_before_clamp = 0.0;
  long paths = 0;
};
McComparison compare_with_monte_carlo(const sde::SDESystem& sys, const Lattice& lat, double rho, double tau,
                                      long paths, std::uint64_t seed, int bins, double mc_dt, int threads = 1);

// df/dtau = (rho/2) e^{-psi} (f_11 + f_22): the h-block Laplace-Beltrami for
// g_ij = delta_ij e^psi on an (x1, x2) lattice.
Eigen::VectorXd h_diffusion_solve(const Lattice& lat, const ScalarField& psi, const Eigen::VectorXd& f0,
                                  double tau_end, double rho, double dt = 0.0);

// Lattice over v_hat (3 axes) or over the first component with the others zero (1 axis).
struct VelocityLattice {
  int dims = 3;
  double lo = -1.0, hi = 1.0;
  int n = 16;
  double spacing() const { return (hi - lo) / (n - 1); }
  std::size_t size() const;
  Eigen::Vector3d velocity(std::size_t idx) const;
  void validate() const;
};
// (1/sqrt|h|) d_e (sqrt|h| h^{em} d_m) in flux form with zero Dirichlet data
// outside the lattice; weight is sqrt|h| times the cell volume.
Generator build_velocity_laplacian(const VelocityLattice& lat);

}  // namespace nhdiff::fp
