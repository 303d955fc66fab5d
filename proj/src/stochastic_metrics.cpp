#include "nhdiff/stochastic_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nhdiff/parallel.hpp"
#include "nhdiff/rng.hpp"
#include "nhdiff/stats.hpp"

namespace nhdiff::stochastic {

using ansatz::Grid;
using ansatz::GridField;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

// Streams of the counter generator, by component.
enum Stream : std::uint32_t {
  kModeAmplitude = 0,
  kModePhase = 1,
  kFeatureX = 2,
  kFeatureY = 3,
  kFeatureScale = 4,
  kFeaturePhase = 5,
  kBrownian = 6,
  kSourceOffset = 8,  // added to the feature streams for the upsilon2 field
};

double axis_period(const HDiffusionSource& h, const Grid& grid, int d) {
  return h.period[d] > 0 ? h.period[d] : grid.axes[d].end() - grid.axes[d].start;
}

// sum_m a_m cos(k_m . x + theta_m) e^{-lambda_m tau}, tau = t - t0 (lambda = 0 for static fields).
struct Modes {
  std::vector<std::array<double, 2>> k;
  std::vector<double> a, theta, lambda;
  double t0 = 0.0;

  Jet jet(const ChartPoint& u) const {
    Jet out;
    for (std::size_t m = 0; m < a.size(); ++m) {
      const double ph = k[m][0] * u[0] + k[m][1] * u[1] + theta[m];
      const double e = a[m] * std::exp(-lambda[m] * (u[2] - t0));
      const double c = std::cos(ph), s = std::sin(ph);
      // gradient over (x1, x2, t); derivative along t brings -lambda
      const std::array<double, 3> kk{k[m][0], k[m][1], -lambda[m]};
      out.v += e * c;
      for (int p = 0; p < 3; ++p) {
        const double dp = p < 2 ? -kk[p] * s : kk[p] * c;
        out.g(p) += e * dp;
        for (int q = 0; q < 3; ++q) {
          double h;
          if (p < 2 && q < 2)
            h = -kk[p] * kk[q] * c;
          else if (p < 2)
            h = -kk[p] * kk[q] * s;
          else if (q < 2)
            h = -kk[q] * kk[p] * s;
          else
            h = kk[p] * kk[q] * c;
          out.h(p, q) += e * h;
        }
      }
    }
    return out;
  }
};

double heat_rate(const HDiffusionSource& h) {
  if (!h.psi.is_constant()) throw ConfigError("h-diffusion source needs a constant psi");
  return 0.5 * h.rho * std::exp(-h.psi.constant_value());
}

ScalarField heat_tilde(const RandomGeneratorConfig& cfg, const Grid& grid, long r) {
  const HDiffusionSource& h = cfg.heat;
  const double D = heat_rate(h);
  const double t0 = grid.axes[2].start;
  if (h.bump_width > 0) {
    const double w = h.bump_width, cx = h.bump_center[0], cy = h.bump_center[1];
    return ScalarField::from_jet([=](const ChartPoint& u) {
      // Plane heat kernel: w / s exp(-|x - c|^2 / 2 s) with s = w + 2 D tau.
      const double s = w + 2 * D * (u[2] - t0);
      const double dx = u[0] - cx, dy = u[1] - cy, r2 = dx * dx + dy * dy;
      const double v = w / s * std::exp(-r2 / (2 * s));
      const double st = 2 * D;
      Jet j;
      j.v = v;
      j.g(0) = -dx / s * v;
      j.g(1) = -dy / s * v;
      // d/ds of v = v (r2 / 2 s^2 - 1 / s)
      const double vs = v * (r2 / (2 * s * s) - 1 / s);
      j.g(2) = vs * st;
      j.h(0, 0) = (dx * dx / (s * s) - 1 / s) * v;
      j.h(1, 1) = (dy * dy / (s * s) - 1 / s) * v;
      j.h(0, 1) = j.h(1, 0) = dx * dy / (s * s) * v;
      // d/ds (-x v / s) = -x (vs / s - v / s^2)
      j.h(0, 2) = j.h(2, 0) = -dx * (vs / s - v / (s * s)) * st;
      j.h(1, 2) = j.h(2, 1) = -dy * (vs / s - v / (s * s)) * st;
      const double vss = vs * (r2 / (2 * s * s) - 1 / s) + v * (-r2 / (s * s * s) + 1 / (s * s));
      j.h(2, 2) = vss * st * st;
      return j;
    });
  }
  const rng::CounterRng gen(cfg.seed);
  Modes m;
  m.t0 = t0;
  const double L0 = axis_period(h, grid, 0), L1 = axis_period(h, grid, 1);
  const int count = h.modes * h.modes - 1;
  std::uint64_t id = 0;
  for (int a = 0; a < h.modes; ++a)
    for (int b = 0; b < h.modes; ++b) {
      if (a == 0 && b == 0) continue;
      const std::array<double, 2> k{kTwoPi * a / L0, kTwoPi * b / L1};
      m.k.push_back(k);
      m.a.push_back(h.amplitude * gen.normal(r, id, kModeAmplitude) / std::sqrt(double(count)));
      m.theta.push_back(kTwoPi * gen.uniform(r, id, kModePhase));
      m.lambda.push_back(D * (k[0] * k[0] + k[1] * k[1]));
      ++id;
    }
  return ScalarField::from_jet([m = std::move(m)](const ChartPoint& u) { return m.jet(u); });
}

// Unit-variance Gaussian field over x with correlation exp(-|x - y| / l), by
// random Fourier features drawn from the bivariate Cauchy spectral density.
ScalarField correlated_field(const RandomSourceSpec& src, std::uint64_t seed, long r, std::uint32_t offset) {
  const rng::CounterRng gen(seed);
  Modes m;
  const double amp = std::sqrt(2.0 / src.features);
  for (int f = 0; f < src.features; ++f) {
    const double z = std::abs(gen.normal(r, f, kFeatureScale + offset));
    const double scale = 1.0 / (src.correlation_length * z);
    m.k.push_back({gen.normal(r, f, kFeatureX + offset) * scale, gen.normal(r, f, kFeatureY + offset) * scale});
    m.a.push_back(amp);
    m.theta.push_back(kTwoPi * gen.uniform(r, f, kFeaturePhase + offset));
    m.lambda.push_back(0.0);
  }
  return ScalarField::from_jet([m = std::move(m)](const ChartPoint& u) { return m.jet(u); });
}

ScalarField add_scaled(const ScalarField& base, double c, const ScalarField& extra) {
  return ScalarField::from_jet([=](const ChartPoint& u) { return base.jet(u) + c * extra.jet(u); });
}

}  // namespace

void RandomGeneratorConfig::validate() const {
  if (!(varpi >= 0.0) || !std::isfinite(varpi)) throw ConfigError("varpi must be finite and non-negative");
  if (realizations < 1) throw ConfigError("realizations must be at least 1");
  if (!(heat.rho > 0.0)) throw ConfigError("heat.rho must be positive");
  if (heat.modes < 1 && heat.bump_width <= 0) throw ConfigError("heat.modes must be at least 1");
  if (heat.bump_width < 0) throw ConfigError("heat.bump_width must be non-negative");
  if (!(source.correlation_length > 0.0)) throw ConfigError("source.correlation_length must be positive");
  if (source.features < 1) throw ConfigError("source.features must be at least 1");
  if (kind == TildeKind::HDiffusion) heat_rate(heat);
  if (kind == TildeKind::Custom && !custom) throw ConfigError("custom tilde kind needs a field callback");
}

ScalarField tilde_field(const RandomGeneratorConfig& cfg, const Grid& grid, long realization) {
  switch (cfg.kind) {
    case TildeKind::HDiffusion: return heat_tilde(cfg, grid, realization);
    case TildeKind::RandomSource: return correlated_field(cfg.source, cfg.seed, realization, 0);
    case TildeKind::Brownian: throw ConfigError("a Brownian tilde has no smooth field form");
    case TildeKind::Custom: return cfg.custom(realization);
  }
  throw ConfigError("unknown tilde kind");
}

ScalarField upsilon2_noise(const RandomGeneratorConfig& cfg, long realization) {
  if (cfg.kind != TildeKind::RandomSource || cfg.source.upsilon2_amplitude == 0.0) return ScalarField::constant(0.0);
  const ScalarField f = correlated_field(cfg.source, cfg.seed, realization, kSourceOffset);
  const double a = cfg.source.upsilon2_amplitude;
  return ScalarField::from_jet([=](const ChartPoint& u) { return a * f.jet(u); });
}

ScalarField random_generating_function(const RandomGeneratorConfig& cfg, const ScalarField& phi, const Grid& grid,
                                       long realization) {
  if (cfg.varpi == 0.0) return phi;
  return add_scaled(phi, cfg.varpi, tilde_field(cfg, grid, realization));
}

std::vector<double> brownian_tilde(const RandomGeneratorConfig& cfg, const ansatz::Axis& t, long realization) {
  const rng::CounterRng gen(cfg.seed);
  std::vector<double> w(t.n, 0.0);
  const double sd = std::sqrt(cfg.heat.rho * t.step);
  for (int k = 1; k < t.n; ++k) w[k] = w[k - 1] + sd * gen.normal(realization, k, kBrownian);
  return w;
}

GridField stratonovich_metric_integral(const GridField& h3, const Grid& grid) {
  if (h3.size() != grid.size()) throw ConfigError("field does not match the grid");
  const int nt = grid.axes[2].n;
  const double dt = grid.axes[2].step;
  GridField out(h3.size());
  for (std::size_t c = 0; c < grid.columns(); ++c) {
    const std::size_t base = c * nt;
    out[base] = 0.0;
    for (int k = 1; k < nt; ++k) out[base + k] = out[base + k - 1] + 0.5 * dt * (h3[base + k - 1] + h3[base + k]);
  }
  return out;
}

double midpoint_sum(const std::vector<double>& f, const std::vector<double>& x) {
  if (f.size() != x.size() || f.size() % 2 == 0) throw ConfigError("midpoint sums need 2n + 1 matching samples");
  double s = 0.0;
  for (std::size_t m = 0; 2 * m + 2 < f.size(); ++m) s += f[2 * m + 1] * (x[2 * m + 2] - x[2 * m]);
  return s;
}

StratonovichIdentityReport stratonovich_identity(long paths, int coarse_steps, int levels, double T,
                                                 std::uint64_t seed, int threads) {
  if (paths < 20 || coarse_steps < 1 || levels < 2 || !(T > 0)) throw ConfigError("invalid Stratonovich identity setup");
  const long fine = 2L * coarse_steps << (levels - 1);  // half steps of the finest level
  const double dtf = T / fine;
  const rng::CounterRng gen(seed);
  // err2[p * levels + l]
  std::vector<double> err2(paths * levels);
  parallel_for(paths, threads, [&](long p) {
    std::vector<double> W(fine + 1, 0.0);
    for (long s = 1; s <= fine; ++s) W[s] = W[s - 1] + std::sqrt(dtf) * gen.normal(p, s, 0);
    const double exact = 0.5 * W[fine] * W[fine];
    for (int l = 0; l < levels; ++l) {
      const long half = 2L * coarse_steps << l;
      const long stride = fine / half;
      std::vector<double> w(half + 1);
      for (long s = 0; s <= half; ++s) w[s] = W[s * stride];
      const double e = midpoint_sum(w, w) - exact;
      err2[p * levels + l] = e * e;
    }
  });
  StratonovichIdentityReport rep;
  std::vector<double> dt;
  for (int l = 0; l < levels; ++l) {
    const int n = coarse_steps << l;
    double s = 0;
    for (long p = 0; p < paths; ++p) s += err2[p * levels + l];
    rep.steps.push_back(n);
    rep.rms.push_back(std::sqrt(s / paths));
    rep.expected.push_back(0.5 * std::sqrt(T * T / n));
    dt.push_back(T / n);
  }
  rep.order = stats::observed_order(dt, rep.rms);
  const int batches = 10;
  std::vector<double> orders;
  for (int b = 0; b < batches; ++b) {
    std::vector<double> rms(levels);
    const long lo = paths * b / batches, hi = paths * (b + 1) / batches;
    for (int l = 0; l < levels; ++l) {
      double s = 0;
      for (long p = lo; p < hi; ++p) s += err2[p * levels + l];
      rms[l] = std::sqrt(s / (hi - lo));
    }
    orders.push_back(stats::observed_order(dt, rms));
  }
  rep.order_stderr = std::sqrt(stats::moments(orders, 1).variance / batches);
  return rep;
}

long MetricEnsemble::accepted() const {
  return std::count_if(realizations.begin(), realizations.end(), [](const Realization& r) { return r.accepted; });
}

namespace {

LcSummary summarize(const ansatz::LcReport& lc) {
  LcSummary s;
  s.pass = lc.pass;
  s.max_torsion = lc.max_torsion;
  s.max_w_curl = lc.max_w_curl;
  s.max_n_t = lc.max_n_t;
  s.max_n_curl = lc.max_n_curl;
  const std::array<std::pair<double, const char*>, 4> v{{{lc.max_torsion, "torsion"},
                                                         {lc.max_w_curl, "w_curl"},
                                                         {lc.max_n_t, "n_t"},
                                                         {lc.max_n_curl, "n_curl"}}};
  s.dominant = std::max_element(v.begin(), v.end())->second;
  return s;
}

ansatz::GeneratingData randomized(ansatz::Family family, const ansatz::GeneratingData& base,
                                  const RandomGeneratorConfig& cfg, const Grid& grid, long r) {
  ansatz::GeneratingData g = base;
  if (cfg.varpi == 0.0) return g;
  using ansatz::Family;
  if (cfg.kind == TildeKind::Brownian && family != Family::Vacuum)
    throw ConfigError("a Brownian tilde is only available for the vacuum family");
  switch (family) {
    case Family::A:
    case Family::ConstPhi:
      g.phi = random_generating_function(cfg, base.phi, grid, r);
      if (cfg.kind == TildeKind::RandomSource && cfg.source.upsilon2_amplitude != 0.0)
        g.upsilon2 = add_scaled(base.upsilon2, cfg.varpi, upsilon2_noise(cfg, r));
      break;
    case Family::Vacuum: {
      GridField h3(grid.size());
      std::vector<double> w;
      ScalarField tilde;
      if (cfg.kind == TildeKind::Brownian)
        w = brownian_tilde(cfg, grid.axes[2], r);
      else
        tilde = tilde_field(cfg, grid, r);
      for (int i = 0; i < grid.axes[0].n; ++i)
        for (int j = 0; j < grid.axes[1].n; ++j)
          for (int k = 0; k < grid.axes[2].n; ++k) {
            const ChartPoint u = grid.point(i, j, k);
            const double x = cfg.kind == TildeKind::Brownian ? w[k] : tilde(u);
            h3[grid.index(i, j, k)] = (base.h3_samples ? (*base.h3_samples)[grid.index(i, j, k)] : base.h3(u)) +
                                      cfg.varpi * x;
          }
      g.h3_samples = std::move(h3);
      break;
    }
    case Family::H3Const: {
      const ScalarField tilde = tilde_field(cfg, grid, r);
      const double t0 = grid.axes[2].start;
      const ScalarField at_t0 = ScalarField::from_jet([=](const ChartPoint& u) {
        ChartPoint v = u;
        v[2] = t0;
        Jet j = tilde.jet(v);
        j.g(2) = 0;
        j.h.row(2).setZero();
        j.h.col(2).setZero();
        return j;
      });
      g.h4_init = add_scaled(base.h4_init, cfg.varpi, at_t0);
      break;
    }
  }
  return g;
}

}  // namespace

MetricEnsemble generate_ensemble(ansatz::Family family, const ansatz::GeneratingData& base,
                                 const RandomGeneratorConfig& cfg, const Grid& grid, const EnsembleOptions& opt) {
  cfg.validate();
  grid.validate();
  MetricEnsemble ens;
  ens.family = family;
  ens.grid = grid;
  ens.config = cfg;
  ens.tolerance = opt.tolerance;
  for (const auto& q : opt.probes)
    if (q.i < 0 || q.i >= grid.axes[0].n || q.j < 0 || q.j >= grid.axes[1].n || q.k < 0 || q.k >= grid.axes[2].n)
      throw ConfigError("probe point outside the grid");
  ens.probes = opt.probes;
  ens.realizations.resize(cfg.realizations);
  ansatz::GenerateOptions gopt = opt.generate;
  gopt.threads = 1;
  parallel_for(cfg.realizations, opt.threads, [&](long r) {
    Realization& out = ens.realizations[r];
    out.index = r;
    try {
      const ansatz::GeneratingData g = randomized(family, base, cfg, grid, r);
      ansatz::AnsatzSolution s = ansatz::generate(family, g, grid, gopt);
      out.built = true;
      const ansatz::ResidualReport rep = ansatz::residuals(s, g, opt.mode);
      out.r2 = rep.n2.max;
      out.r3 = rep.n3.max;
      out.r4 = rep.n4.max;
      out.residual = rep.max_234();
      out.lc = summarize(ansatz::lc_constraint_check(s, opt.mode, opt.lc_tolerance));
      for (int c = 0; c < kCoefficients; ++c)
        for (const auto& q : opt.probes)
          out.probes[c].push_back(coefficient(s, static_cast<Coefficient>(c))[grid.index(q.i, q.j, q.k)]);
      if (opt.keep_solutions) {
        s.companions.reset();
        out.solution = std::move(s);
      }
      out.accepted = std::isfinite(out.residual) && out.residual < opt.tolerance;
      if (!out.accepted) out.reason = "residual " + std::to_string(out.residual) + " above tolerance";
    } catch (const NumericalError& e) {
      out.reason = e.what();
    }
  });
  if (ens.accepted() == 0) throw NumericalError("all realizations rejected: " + ens.realizations.front().reason);
  return ens;
}

Coefficient coefficient_from_name(const std::string& name) {
  if (name == "h3") return Coefficient::H3;
  if (name == "h4") return Coefficient::H4;
  if (name == "w1") return Coefficient::W1;
  if (name == "w2") return Coefficient::W2;
  if (name == "n1") return Coefficient::N1;
  if (name == "n2") return Coefficient::N2;
  throw ConfigError("unknown coefficient '" + name + "' (h3, h4, w1, w2, n1, n2)");
}

const GridField& coefficient(const ansatz::AnsatzSolution& s, Coefficient c) {
  switch (c) {
    case Coefficient::H3: return s.h3;
    case Coefficient::H4: return s.h4;
    case Coefficient::W1: return s.w[0];
    case Coefficient::W2: return s.w[1];
    case Coefficient::N1: return s.n[0];
    case Coefficient::N2: return s.n[1];
  }
  throw ConfigError("unknown coefficient");
}

EnsembleStatistics ensemble_statistics(const MetricEnsemble& ens, Coefficient c,
                                       const std::vector<GridIndex>& points) {
  const Grid& g = ens.grid;
  for (const auto& p : points)
    if (p.i < 0 || p.i >= g.axes[0].n || p.j < 0 || p.j >= g.axes[1].n || p.k < 0 || p.k >= g.axes[2].n)
      throw ConfigError("statistics point outside the grid");
  // Probe slot of each point, or -1 to read the kept solution.
  std::vector<int> slot(points.size(), -1);
  for (std::size_t q = 0; q < points.size(); ++q)
    for (std::size_t s = 0; s < ens.probes.size(); ++s)
      if (ens.probes[s].i == points[q].i && ens.probes[s].j == points[q].j && ens.probes[s].k == points[q].k)
        slot[q] = static_cast<int>(s);
  std::vector<std::vector<double>> samples(points.size());
  for (const auto& r : ens.realizations) {
    if (!r.accepted) continue;
    for (std::size_t q = 0; q < points.size(); ++q) {
      if (slot[q] >= 0) {
        samples[q].push_back(r.probes[static_cast<int>(c)][slot[q]]);
      } else {
        if (!r.solution) throw ConfigError("statistics point is not a probe and solutions were not kept");
        samples[q].push_back(coefficient(*r.solution, c)[g.index(points[q].i, points[q].j, points[q].k)]);
      }
    }
  }
  EnsembleStatistics st;
  st.realizations = points.empty() ? ens.accepted() : static_cast<long>(samples[0].size());
  if (st.realizations < 2) throw ConfigError("statistics need at least 2 accepted realizations");
  const int batches = st.realizations >= 20 ? 10 : 1;
  st.covariance.resize(points.size(), points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    const stats::Moments m = stats::moments(samples[p], batches);
    st.mean.push_back(m.mean);
    st.mean_stderr.push_back(batches > 1 ? m.mean_stderr : std::sqrt(m.variance / m.n));
    for (std::size_t q = 0; q <= p; ++q) st.covariance(p, q) = st.covariance(q, p) = stats::covariance(samples[p], samples[q]);
  }
  return st;
}

std::vector<LcEntry> lc_transition_report(const MetricEnsemble& ens) {
  std::vector<LcEntry> out;
  for (const auto& r : ens.realizations) {
    if (!r.built) continue;
    LcEntry e;
    e.index = r.index;
    e.compatible = r.lc.pass;
    e.dominant = r.lc.dominant;
    e.max_violation = std::max({r.lc.max_torsion, r.lc.max_w_curl, r.lc.max_n_t, r.lc.max_n_curl});
    out.push_back(e);
  }
  return out;
}

}  // namespace nhdiff::stochastic
