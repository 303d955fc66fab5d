#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "nhdiff/types.hpp"

namespace nhdiff {

// Value, gradient and Hessian of a scalar at a chart point.
struct Jet {
  double v = 0.0;
  Vec4 g = Vec4::Zero();
  Mat4 h = Mat4::Zero();
};

Jet operator+(const Jet& a, const Jet& b);
Jet operator*(const Jet& a, const Jet& b);
Jet operator*(double s, const Jet& a);
// Chain rule for a scalar function with derivatives (f, f', f'') at a.v.
Jet compose(const Jet& a, double f, double df, double ddf);

// Central-difference step sizes scaled to the coordinate magnitude.
double fd_step(double x);
double fd_step2(double x);

// Scalar field on the chart. Carries an analytic jet when one is known;
// otherwise derivatives come from central finite differences of the values.
class ScalarField {
 public:
  using ValueFn = std::function<double(const ChartPoint&)>;
  using JetFn = std::function<Jet(const ChartPoint&)>;

  ScalarField();  // identically zero
  static ScalarField constant(double c);
  static ScalarField from_value(ValueFn f);
  static ScalarField from_jet(JetFn f);

  double operator()(const ChartPoint& u) const;
  bool has_analytic_jet() const { return static_cast<bool>(jet_); }
  bool is_constant() const { return constant_; }
  double constant_value() const { return c_; }

  Jet jet(const ChartPoint& u) const;      // analytic when available
  Jet fd_jet(const ChartPoint& u) const;   // always finite differences
  Vec4 fd_gradient(const ChartPoint& u) const;

 private:
  ValueFn value_;
  JetFn jet_;
  bool constant_ = false;
  double c_ = 0.0;
};

// Built-in coefficient families. All carry analytic jets.
struct Monomial {
  double coef = 0.0;
  std::array<int, 4> powers{0, 0, 0, 0};
};
ScalarField polynomial(std::vector<Monomial> terms);
enum class TrigKind { Sin, Cos };
// offset + amplitude * trig(k . u + phase)
ScalarField trigonometric(TrigKind kind, double amplitude, const Vec4& k, double phase, double offset);
// offset + amplitude * exp(k . u)
ScalarField exponential(double amplitude, const Vec4& k, double offset);
ScalarField sum(std::vector<ScalarField> terms);
ScalarField product(std::vector<ScalarField> factors);

// Bilinear interpolation on a regular 2-d table over chart axes (ax0, ax1),
// values row-major with ax1 fastest. Extrapolates linearly from edge cells.
struct Table2D {
  std::array<int, 2> axes{0, 1};
  std::array<double, 2> origin{0.0, 0.0};
  std::array<double, 2> spacing{1.0, 1.0};
  std::array<int, 2> shape{2, 2};
  std::vector<double> values;
};
ScalarField tabulated(Table2D table);

}  // namespace nhdiff
