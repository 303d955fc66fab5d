#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "nhdiff/field.hpp"
#include "nhdiff/geometry.hpp"
#include "nhdiff/types.hpp"

namespace nhdiff::ansatz {

struct Axis {
  double start = 0.0;
  double step = 1.0;
  int n = 2;
  double at(int i) const { return start + step * i; }
  double end() const { return at(n - 1); }
  static Axis span(double lo, double hi, int n) { return {lo, (hi - lo) / (n - 1), n}; }
};

// Rectangular (x1, x2, t) lattice, t fastest.
struct Grid {
  std::array<Axis, 3> axes;

  std::size_t size() const { return std::size_t(axes[0].n) * axes[1].n * axes[2].n; }
  std::size_t columns() const { return std::size_t(axes[0].n) * axes[1].n; }
  std::size_t index(int i, int j, int k) const {
    return (std::size_t(i) * axes[1].n + j) * axes[2].n + k;
  }
  ChartPoint point(int i, int j, int k) const {
    return {axes[0].at(i), axes[1].at(j), axes[2].at(k), 0.0};
  }
  void validate() const;
};

using GridField = std::vector<double>;

// Partials of one v-field at every grid point. An empty member means
// "not known analytically"; complete_derivatives() fills it by differences.
struct FieldDerivatives {
  GridField t, tt;
  std::array<GridField, 2> x, xt;
};

enum class Family { A, Vacuum, H3Const, ConstPhi };
std::string family_name(Family f);

struct AnsatzSolution {
  Family family = Family::A;
  Grid grid;
  GridField psi;  // over (x1, x2)
  GridField h3, h4;
  std::array<GridField, 2> w, n;
  GridField sigma_upsilon;  // constant-phi family only
  double psi_residual = 0.0;

  struct Companions {
    FieldDerivatives h3, h4;
    std::array<FieldDerivatives, 2> w, n;
  };
  std::optional<Companions> companions;

  double g(int i, int j) const;  // g1 = g2 = exp(psi)
};

struct GeneratingData {
  ScalarField phi;  // phi for family A, f for the constant-phi family
  ScalarField upsilon2;
  ScalarField upsilon4;
  ScalarField h4_0 = ScalarField::constant(1.0);
  std::array<ScalarField, 2> n1, n2;
  // Vacuum family inputs; h3_samples replaces h3 with a realization on the grid.
  ScalarField h3 = ScalarField::constant(-1.0);
  std::array<ScalarField, 2> w;
  std::optional<GridField> h3_samples;
  // h3-constant family: coefficient and initial data at the first t slice.
  double h3_0 = -1.0;
  ScalarField h4_init = ScalarField::constant(1.0);
  ScalarField h4t_init = ScalarField::constant(0.0);
  // Constant-phi family.
  double h_0 = 1.0;
  ScalarField sigma40 = ScalarField::constant(1.0);
  // +1/-1 selects the branch of h4; 0 picks the one giving h3 < 0 < h4.
  int sign = 0;
  ScalarField psi_boundary;  // Dirichlet data for psi
};

enum class PsiStencil { FivePoint, Compact9 };
struct PsiOptions {
  PsiStencil stencil = PsiStencil::Compact9;
  double tolerance = 1e-10;
  double omega = 1.9;
  long max_iterations = 1000000;
};

struct PsiResult {
  GridField psi;  // row-major, x2 fastest
  double residual = 0.0;
  long iterations = 0;
};

// Solves psi_11 + psi_22 = 2 upsilon4 with Dirichlet data by SOR.
PsiResult solve_psi(const ScalarField& upsilon4, const Axis& x1, const Axis& x2,
                    const ScalarField& boundary, const PsiOptions& opt = {});
// Max residual of the discrete equation on interior points.
double psi_stencil_residual(const GridField& psi, const ScalarField& upsilon4, const Axis& x1,
                            const Axis& x2, PsiStencil stencil);

struct AuxValues {
  double phi = 0.0;
  std::array<double, 2> alpha{};
  double beta = 0.0;
  double gamma = 0.0;
};
// Inputs are jets of h3 and h4 over (x1, x2, t). Throws NumericalError when
// h4* = 0 (vacuum branch) or h3 h4 = 0.
AuxValues aux_values(const Jet& h3, const Jet& h4);

struct GenerateOptions {
  PsiOptions psi;
  int threads = 1;
  int rk4_substeps = 16;
  std::array<int, 2> signature{-1, 1};  // required signs of h3, h4; 0 disables
};

AnsatzSolution generate_family_A(const GeneratingData& gen, const Grid& grid,
                                 const GenerateOptions& opt = {});
AnsatzSolution generate_family_vacuum(const GeneratingData& gen, const Grid& grid,
                                      const GenerateOptions& opt = {});
AnsatzSolution generate_family_h3const(const GeneratingData& gen, const Grid& grid,
                                       const GenerateOptions& opt = {});
AnsatzSolution generate_family_constphi(const GeneratingData& gen, const Grid& grid,
                                        const GenerateOptions& opt = {});
// One column of h4** = (h4*)^2 / 2h4 + 2 h3_0 h4 upsilon2 by RK4.
std::vector<double> integrate_h4(double h3_0, const ScalarField& upsilon2, double x1, double x2, const Axis& t,
                                 double h4_0, double h4t_0, int substeps = 16);
AnsatzSolution generate(Family family, const GeneratingData& gen, const Grid& grid,
                        const GenerateOptions& opt = {});

// Fills empty members by second-order differences (one-sided at edges).
void complete_derivatives(FieldDerivatives& d, const GridField& f, const Grid& grid);
FieldDerivatives grid_derivatives(const GridField& f, const Grid& grid);

struct Norms {
  double max = 0.0;
  double l2 = 0.0;  // root mean square over points
};
Norms norms(const GridField& r);

enum class ResidualMode { Analytic, FiniteDifference };

struct ResidualReport {
  GridField r1;  // over (x1, x2)
  GridField r2;
  std::array<GridField, 2> r3, r4;
  Norms n1, n2, n3, n4;
  double max_234() const;
};

// Analytic mode uses the companion derivatives carried by the solution
// (falls back to differences for any that are missing).
ResidualReport residuals(const AnsatzSolution& sol, const GeneratingData& gen,
                         ResidualMode mode = ResidualMode::Analytic,
                         PsiStencil stencil = PsiStencil::Compact9);

struct LcReport {
  std::array<GridField, 2> torsion;  // w_i* - e_i ln|h4|
  GridField w_curl;                  // e_1 w_2 - e_2 w_1
  std::array<GridField, 2> n_t;      // n_i*
  GridField n_curl;                  // d_1 n_2 - d_2 n_1
  double max_torsion = 0.0, max_w_curl = 0.0, max_n_t = 0.0, max_n_curl = 0.0;
  double tolerance = 1e-8;
  bool pass = false;
  double max() const;
};
LcReport lc_constraint_check(const AnsatzSolution& sol, ResidualMode mode = ResidualMode::Analytic,
                             double tolerance = 1e-8);

// e_k omega = d_k omega + w_k omega* + n_k d_y omega on the grid slice y = y.
std::array<GridField, 2> check_conformal_condition(const ScalarField& omega,
                                                   const AnsatzSolution& sol, double y = 0.0);

// MetricSpec with the t-integrals evaluated by Gauss-Legendre quadrature from
// the first t slice, for use with the geometry module (finite-difference mode).
// psi is interpolated bilinearly from the solution.
geometry::MetricSpec assemble_metric(Family family, const GeneratingData& gen,
                                     const AnsatzSolution& sol);

}  // namespace nhdiff::ansatz
