#include "nhdiff/field.hpp"

#include <cmath>
#include <limits>

namespace nhdiff {

Jet operator+(const Jet& a, const Jet& b) { return {a.v + b.v, a.g + b.g, a.h + b.h}; }

Jet operator*(const Jet& a, const Jet& b) {
  Jet r;
  r.v = a.v * b.v;
  r.g = a.g * b.v + b.g * a.v;
  r.h = a.h * b.v + b.h * a.v + a.g * b.g.transpose() + b.g * a.g.transpose();
  return r;
}

Jet operator*(double s, const Jet& a) { return {s * a.v, s * a.g, s * a.h}; }

Jet compose(const Jet& a, double f, double df, double ddf) {
  Jet r;
  r.v = f;
  r.g = df * a.g;
  r.h = df * a.h + ddf * a.g * a.g.transpose();
  return r;
}

double fd_step(double x) {
  static const double e = std::cbrt(std::numeric_limits<double>::epsilon());
  return std::max(std::abs(x), 1.0) * e;
}

double fd_step2(double x) {
  static const double e = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  return std::max(std::abs(x), 1.0) * e;
}

ScalarField::ScalarField() : constant_(true), c_(0.0) {}

ScalarField ScalarField::constant(double c) {
  ScalarField f;
  f.c_ = c;
  return f;
}

ScalarField ScalarField::from_value(ValueFn fn) {
  ScalarField f;
  f.constant_ = false;
  f.value_ = std::move(fn);
  return f;
}

ScalarField ScalarField::from_jet(JetFn fn) {
  ScalarField f;
  f.constant_ = false;
  f.value_ = [fn](const ChartPoint& u) { return fn(u).v; };
  f.jet_ = std::move(fn);
  return f;
}

double ScalarField::operator()(const ChartPoint& u) const { return constant_ ? c_ : value_(u); }

Jet ScalarField::jet(const ChartPoint& u) const {
  if (constant_) return Jet{c_, Vec4::Zero(), Mat4::Zero()};
  if (jet_) return jet_(u);
  return fd_jet(u);
}

Vec4 ScalarField::fd_gradient(const ChartPoint& u) const {
  Vec4 g = Vec4::Zero();
  if (constant_) return g;
  for (int m = 0; m < 4; ++m) {
    const double h = fd_step(u[m]);
    ChartPoint p = u, q = u;
    p[m] += h;
    q[m] -= h;
    g(m) = (value_(p) - value_(q)) / (p[m] - q[m]);
  }
  return g;
}

Jet ScalarField::fd_jet(const ChartPoint& u) const {
  Jet r;
  r.v = (*this)(u);
  if (constant_) return r;
  r.g = fd_gradient(u);
  for (int m = 0; m < 4; ++m) {
    const double hm = fd_step2(u[m]);
    ChartPoint p = u, q = u;
    p[m] += hm;
    q[m] -= hm;
    r.h(m, m) = (value_(p) - 2.0 * r.v + value_(q)) / (hm * hm);
    for (int n = m + 1; n < 4; ++n) {
      const double hn = fd_step2(u[n]);
      ChartPoint pp = u, pq = u, qp = u, qq = u;
      pp[m] += hm; pp[n] += hn;
      pq[m] += hm; pq[n] -= hn;
      qp[m] -= hm; qp[n] += hn;
      qq[m] -= hm; qq[n] -= hn;
      const double d = (value_(pp) - value_(pq) - value_(qp) + value_(qq)) / (4.0 * hm * hn);
      r.h(m, n) = d;
      r.h(n, m) = d;
    }
  }
  return r;
}

ScalarField polynomial(std::vector<Monomial> terms) {
  return ScalarField::from_jet([terms = std::move(terms)](const ChartPoint& u) {
    Jet total;
    for (const auto& t : terms) {
      Jet term{t.coef, Vec4::Zero(), Mat4::Zero()};
      for (int m = 0; m < 4; ++m) {
        const int p = t.powers[m];
        if (p == 0) continue;
        Jet coord;
        coord.v = u[m];
        coord.g(m) = 1.0;
        const double x = u[m];
        const double f = std::pow(x, p);
        const double df = p * std::pow(x, p - 1);
        const double ddf = p >= 2 ? p * (p - 1) * std::pow(x, p - 2) : 0.0;
        term = term * compose(coord, f, df, ddf);
      }
      total = total + term;
    }
    return total;
  });
}

namespace {
Jet linear_jet(const ChartPoint& u, const Vec4& k, double phase) {
  Jet a;
  a.v = k(0) * u[0] + k(1) * u[1] + k(2) * u[2] + k(3) * u[3] + phase;
  a.g = k;
  return a;
}
}  // namespace

ScalarField trigonometric(TrigKind kind, double amplitude, const Vec4& k, double phase, double offset) {
  return ScalarField::from_jet([=](const ChartPoint& u) {
    const Jet a = linear_jet(u, k, phase);
    const double s = std::sin(a.v), c = std::cos(a.v);
    Jet r = kind == TrigKind::Sin ? compose(a, s, c, -s) : compose(a, c, -s, -c);
    r = amplitude * r;
    r.v += offset;
    return r;
  });
}

ScalarField exponential(double amplitude, const Vec4& k, double offset) {
  return ScalarField::from_jet([=](const ChartPoint& u) {
    const Jet a = linear_jet(u, k, 0.0);
    const double e = std::exp(a.v);
    Jet r = amplitude * compose(a, e, e, e);
    r.v += offset;
    return r;
  });
}

ScalarField sum(std::vector<ScalarField> terms) {
  bool analytic = true, constant = true;
  double c = 0.0;
  for (const auto& t : terms) {
    analytic = analytic && (t.is_constant() || t.has_analytic_jet());
    constant = constant && t.is_constant();
    if (t.is_constant()) c += t.constant_value();
  }
  if (constant) return ScalarField::constant(c);
  if (analytic)
    return ScalarField::from_jet([terms](const ChartPoint& u) {
      Jet r;
      for (const auto& t : terms) r = r + t.jet(u);
      return r;
    });
  return ScalarField::from_value([terms](const ChartPoint& u) {
    double r = 0.0;
    for (const auto& t : terms) r += t(u);
    return r;
  });
}

ScalarField product(std::vector<ScalarField> factors) {
  bool analytic = true, constant = true;
  double c = 1.0;
  for (const auto& t : factors) {
    analytic = analytic && (t.is_constant() || t.has_analytic_jet());
    constant = constant && t.is_constant();
    if (t.is_constant()) c *= t.constant_value();
  }
  if (constant) return ScalarField::constant(c);
  if (analytic)
    return ScalarField::from_jet([factors](const ChartPoint& u) {
      Jet r{1.0, Vec4::Zero(), Mat4::Zero()};
      for (const auto& t : factors) r = r * t.jet(u);
      return r;
    });
  return ScalarField::from_value([factors](const ChartPoint& u) {
    double r = 1.0;
    for (const auto& t : factors) r *= t(u);
    return r;
  });
}

ScalarField tabulated(Table2D table) {
  if (table.shape[0] < 2 || table.shape[1] < 2)
    throw ConfigError("tabulated field needs at least 2x2 samples");
  if (static_cast<int>(table.values.size()) != table.shape[0] * table.shape[1])
    throw ConfigError("tabulated field: value count does not match shape");
  if (table.spacing[0] <= 0.0 || table.spacing[1] <= 0.0)
    throw ConfigError("tabulated field: spacing must be positive");
  return ScalarField::from_jet([t = std::move(table)](const ChartPoint& u) {
    const int a0 = t.axes[0], a1 = t.axes[1];
    const double s = (u[a0] - t.origin[0]) / t.spacing[0];
    const double r = (u[a1] - t.origin[1]) / t.spacing[1];
    const int i = std::clamp(static_cast<int>(std::floor(s)), 0, t.shape[0] - 2);
    const int j = std::clamp(static_cast<int>(std::floor(r)), 0, t.shape[1] - 2);
    const double fs = s - i, fr = r - j;
    auto at = [&](int ii, int jj) { return t.values[ii * t.shape[1] + jj]; };
    const double f00 = at(i, j), f10 = at(i + 1, j), f01 = at(i, j + 1), f11 = at(i + 1, j + 1);
    Jet out;
    out.v = f00 * (1 - fs) * (1 - fr) + f10 * fs * (1 - fr) + f01 * (1 - fs) * fr + f11 * fs * fr;
    out.g(a0) = ((f10 - f00) * (1 - fr) + (f11 - f01) * fr) / t.spacing[0];
    out.g(a1) = ((f01 - f00) * (1 - fs) + (f11 - f10) * fs) / t.spacing[1];
    const double mixed = (f11 - f10 - f01 + f00) / (t.spacing[0] * t.spacing[1]);
    out.h(a0, a1) = mixed;
    out.h(a1, a0) = mixed;
    return out;
  });
}

}  // namespace nhdiff
