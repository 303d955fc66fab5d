#include "nhdiff/app/config.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nhdiff/io.hpp"

namespace nhdiff::app {

using json = nlohmann::json;

std::string command_name(Command c) {
  switch (c) {
    case Command::GeometryCheck: return "geometry-check";
    case Command::Solve: return "solve";
    case Command::Simulate: return "simulate";
    case Command::FpEvolve: return "fp-evolve";
    case Command::Ensemble: return "ensemble";
  }
  return "?";
}

std::string ConfigIssue::str() const {
  std::string s;
  if (line > 0) s += "line " + std::to_string(line) + ": ";
  if (!field.empty()) s += field + ": ";
  return s + message;
}

namespace {

// One JSON object being read. Every key that is looked up is marked, and
// finish() reports the rest as unknown.
struct Obj {
  const json& j;
  std::string path;
  std::vector<ConfigIssue>& errs;
  std::set<std::string> used;

  std::string at(const std::string& key) const { return path + "/" + key; }
  void error(const std::string& field, std::string msg) { errs.push_back({field, 0, std::move(msg)}); }
  const json* get(const std::string& key) {
    used.insert(key);
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
  }
  void finish() {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!used.count(it.key())) error(at(it.key()), "unknown field");
  }
};

bool is_object(const json* v, Obj& o, const std::string& key) {
  if (!v) return false;
  if (!v->is_object()) {
    o.error(o.at(key), "expected an object");
    return false;
  }
  return true;
}

void number(Obj& o, const std::string& key, double& out) {
  const json* v = o.get(key);
  if (!v) return;
  if (!v->is_number()) return o.error(o.at(key), "expected a number");
  out = v->get<double>();
  if (!std::isfinite(out)) o.error(o.at(key), "must be finite");
}

void positive(Obj& o, const std::string& key, double& out) {
  const std::size_t before = o.errs.size();
  number(o, key, out);
  if (o.errs.size() == before && o.j.contains(key) && !(out > 0)) o.error(o.at(key), "must be > 0");
}

template <class Int>
void integer(Obj& o, const std::string& key, Int& out, long long lo) {
  const json* v = o.get(key);
  if (!v) return;
  if (!v->is_number_integer()) return o.error(o.at(key), "expected an integer");
  const long long x = v->get<long long>();
  if (x < lo) return o.error(o.at(key), "must be >= " + std::to_string(lo));
  out = static_cast<Int>(x);
}

void boolean(Obj& o, const std::string& key, bool& out) {
  const json* v = o.get(key);
  if (!v) return;
  if (!v->is_boolean()) return o.error(o.at(key), "expected true or false");
  out = v->get<bool>();
}

template <class E>
void choice(Obj& o, const std::string& key, E& out, const std::map<std::string, E>& options) {
  const json* v = o.get(key);
  if (!v) return;
  std::string names;
  for (const auto& [n, e] : options) names += (names.empty() ? "" : ", ") + n;
  if (!v->is_string()) return o.error(o.at(key), "expected one of " + names);
  const auto it = options.find(v->get<std::string>());
  if (it == options.end()) return o.error(o.at(key), "'" + v->get<std::string>() + "' is not one of " + names);
  out = it->second;
}

bool numbers(const json& v, std::size_t n, std::vector<double>& out, const std::string& path,
             std::vector<ConfigIssue>& errs) {
  if (!v.is_array() || (n > 0 && v.size() != n) || v.empty()) {
    errs.push_back({path, 0, n > 0 ? "expected an array of " + std::to_string(n) + " numbers" : "expected an array of numbers"});
    return false;
  }
  out.clear();
  for (const auto& x : v) {
    if (!x.is_number()) {
      errs.push_back({path, 0, "expected numbers"});
      return false;
    }
    out.push_back(x.get<double>());
  }
  return true;
}

void point4(Obj& o, const std::string& key, ChartPoint& out) {
  const json* v = o.get(key);
  std::vector<double> x;
  if (v && numbers(*v, 4, x, o.at(key), o.errs)) std::copy(x.begin(), x.end(), out.begin());
}

// ---------------------------------------------------------------- fields

ScalarField field(const json& v, const std::string& path, std::vector<ConfigIssue>& errs);

std::vector<ScalarField> field_list(const json& v, const std::string& path, std::vector<ConfigIssue>& errs) {
  std::vector<ScalarField> out;
  if (!v.is_array() || v.empty()) {
    errs.push_back({path, 0, "expected a non-empty array of fields"});
    return out;
  }
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(field(v[i], path + "/" + std::to_string(i), errs));
  return out;
}

Vec4 wave_vector(Obj& o) {
  Vec4 k = Vec4::Zero();
  const json* v = o.get("k");
  std::vector<double> x;
  if (v && numbers(*v, 4, x, o.at("k"), o.errs)) k = Vec4(x[0], x[1], x[2], x[3]);
  return k;
}

ScalarField field(const json& v, const std::string& path, std::vector<ConfigIssue>& errs) {
  if (v.is_number()) return ScalarField::constant(v.get<double>());
  if (!v.is_object() || v.size() != 1) {
    errs.push_back({path, 0, "a field is a number or an object with one of constant, polynomial, sin, cos, exp, sum, product"});
    return {};
  }
  const std::string kind = v.begin().key();
  const json& body = v.begin().value();
  const std::string here = path + "/" + kind;
  if (kind == "constant") {
    if (!body.is_number()) errs.push_back({here, 0, "expected a number"});
    return ScalarField::constant(body.is_number() ? body.get<double>() : 0.0);
  }
  if (kind == "polynomial") {
    std::vector<Monomial> terms;
    if (!body.is_array() || body.empty()) {
      errs.push_back({here, 0, "expected an array of {coef, powers}"});
      return {};
    }
    for (std::size_t i = 0; i < body.size(); ++i) {
      const std::string tp = here + "/" + std::to_string(i);
      if (!body[i].is_object()) {
        errs.push_back({tp, 0, "expected an object"});
        continue;
      }
      Obj t{body[i], tp, errs, {}};
      Monomial m;
      number(t, "coef", m.coef);
      if (const json* p = t.get("powers")) {
        if (!p->is_array() || p->size() != 4 ||
            !std::all_of(p->begin(), p->end(), [](const json& x) { return x.is_number_integer() && x.get<int>() >= 0; }))
          t.error(t.at("powers"), "expected 4 non-negative integers");
        else
          for (int k = 0; k < 4; ++k) m.powers[k] = (*p)[k].get<int>();
      }
      t.finish();
      terms.push_back(m);
    }
    return polynomial(terms);
  }
  if (kind == "sin" || kind == "cos" || kind == "exp") {
    if (!body.is_object()) {
      errs.push_back({here, 0, "expected an object"});
      return {};
    }
    Obj t{body, here, errs, {}};
    double amplitude = 1.0, phase = 0.0, offset = 0.0;
    number(t, "amplitude", amplitude);
    number(t, "offset", offset);
    const Vec4 k = wave_vector(t);
    if (kind != "exp") number(t, "phase", phase);
    t.finish();
    if (kind == "exp") return exponential(amplitude, k, offset);
    return trigonometric(kind == "sin" ? TrigKind::Sin : TrigKind::Cos, amplitude, k, phase, offset);
  }
  if (kind == "sum") return sum(field_list(body, here, errs));
  if (kind == "product") return product(field_list(body, here, errs));
  errs.push_back({here, 0, "unknown field kind"});
  return {};
}

void field_member(Obj& o, const std::string& key, ScalarField& out) {
  if (const json* v = o.get(key)) out = field(*v, o.at(key), o.errs);
}

void field_pair(Obj& o, const std::string& key, std::array<ScalarField, 2>& out) {
  const json* v = o.get(key);
  if (!v) return;
  if (!v->is_array() || v->size() != 2) return o.error(o.at(key), "expected two fields");
  for (int i = 0; i < 2; ++i) out[i] = field((*v)[i], o.at(key) + "/" + std::to_string(i), o.errs);
}

// ---------------------------------------------------------------- sections

void read_spec(const json& v, const std::string& path, RunConfig& cfg, std::vector<ConfigIssue>& errs) {
  Obj o{v, path, errs, {}};
  auto& s = cfg.spec;
  field_member(o, "g1", s.g1);
  field_member(o, "g2", s.g2);
  field_member(o, "h3", s.h3);
  field_member(o, "h4", s.h4);
  if (const json* n = o.get("N"); is_object(n, o, "N")) {
    Obj no{*n, o.at("N"), errs, {}};
    field_member(no, "N3_1", s.N[0][0]);
    field_member(no, "N3_2", s.N[0][1]);
    field_member(no, "N4_1", s.N[1][0]);
    field_member(no, "N4_2", s.N[1][1]);
    no.finish();
  }
  if (const json* sig = o.get("signature")) {
    if (!sig->is_array() || sig->size() != 4 ||
        !std::all_of(sig->begin(), sig->end(), [](const json& x) { return x == 1 || x == -1; }))
      o.error(o.at("signature"), "expected four entries of 1 or -1");
    else
      for (int k = 0; k < 4; ++k) s.signature[k] = (*sig)[k].get<int>();
  }
  enum class Modes { Analytic, Fd, Both };
  Modes m = Modes::Analytic;
  choice<Modes>(o, "derivatives", m, {{"analytic", Modes::Analytic}, {"finite-difference", Modes::Fd}, {"both", Modes::Both}});
  s.mode = m == Modes::Fd ? geometry::DerivativeMode::FiniteDifference : geometry::DerivativeMode::Analytic;
  cfg.cross_check = m == Modes::Both;
  o.finish();
  try {
    s.validate();
  } catch (const ConfigError& e) {
    errs.push_back({path, 0, e.what()});
  }
}

void read_grid(Obj& parent, ansatz::Grid& grid) {
  const json* v = parent.get("grid");
  if (!is_object(v, parent, "grid")) return;
  Obj o{*v, parent.at("grid"), parent.errs, {}};
  const char* names[3] = {"x1", "x2", "t"};
  for (int a = 0; a < 3; ++a) {
    const json* ax = o.get(names[a]);
    if (!ax) continue;
    const std::string p = o.at(names[a]);
    if (!ax->is_array() || ax->size() != 3 || !(*ax)[0].is_number() || !(*ax)[1].is_number() ||
        !(*ax)[2].is_number_integer()) {
      o.error(p, "expected [lo, hi, points]");
      continue;
    }
    const double lo = (*ax)[0].get<double>(), hi = (*ax)[1].get<double>();
    const int n = (*ax)[2].get<int>();
    if (!(hi > lo)) o.error(p, "needs hi > lo");
    if (n < 4) o.error(p, "needs at least 4 points");
    grid.axes[a] = ansatz::Axis::span(lo, hi, std::max(n, 2));
  }
  o.finish();
}

void read_family(Obj& o, ansatz::Family& f) {
  choice<ansatz::Family>(o, "family", f,
                         {{"A", ansatz::Family::A},
                          {"vacuum", ansatz::Family::Vacuum},
                          {"h3const", ansatz::Family::H3Const},
                          {"constphi", ansatz::Family::ConstPhi}});
}

void read_generator(Obj& parent, ansatz::GeneratingData& g) {
  const json* v = parent.get("generator");
  if (!is_object(v, parent, "generator")) return;
  Obj o{*v, parent.at("generator"), parent.errs, {}};
  field_member(o, "phi", g.phi);
  field_member(o, "upsilon2", g.upsilon2);
  field_member(o, "upsilon4", g.upsilon4);
  field_member(o, "h4_0", g.h4_0);
  field_pair(o, "n1", g.n1);
  field_pair(o, "n2", g.n2);
  field_member(o, "h3", g.h3);
  field_pair(o, "w", g.w);
  number(o, "h3_0", g.h3_0);
  field_member(o, "h4_init", g.h4_init);
  field_member(o, "h4t_init", g.h4t_init);
  number(o, "h_0", g.h_0);
  field_member(o, "sigma40", g.sigma40);
  if (const json* s = o.get("sign")) {
    if (*s == 1 || *s == -1 || *s == 0)
      g.sign = s->get<int>();
    else
      o.error(o.at("sign"), "expected -1, 0 or 1");
  }
  field_member(o, "psi_boundary", g.psi_boundary);
  o.finish();
}

void read_solve(const json& v, const std::string& path, SolveConfig& s, std::vector<ConfigIssue>& errs) {
  Obj o{v, path, errs, {}};
  read_family(o, s.family);
  read_generator(o, s.data);
  read_grid(o, s.grid);
  choice<ansatz::PsiStencil>(o, "stencil", s.stencil,
                             {{"compact9", ansatz::PsiStencil::Compact9}, {"five-point", ansatz::PsiStencil::FivePoint}});
  choice<ansatz::ResidualMode>(o, "residuals", s.residual_mode,
                               {{"analytic", ansatz::ResidualMode::Analytic},
                                {"finite-difference", ansatz::ResidualMode::FiniteDifference}});
  o.finish();
}

void read_geometry(const json& v, const std::string& path, GeometryConfig& g, std::vector<ConfigIssue>& errs) {
  Obj o{v, path, errs, {}};
  if (const json* pts = o.get("points")) {
    if (!pts->is_array() || pts->empty()) {
      o.error(o.at("points"), "expected a non-empty array of chart points");
    } else {
      g.points.clear();
      for (std::size_t i = 0; i < pts->size(); ++i) {
        std::vector<double> x;
        if (numbers((*pts)[i], 4, x, o.at("points") + "/" + std::to_string(i), errs))
          g.points.push_back({x[0], x[1], x[2], x[3]});
      }
    }
  }
  boolean(o, "expect_nil", g.expect_nil);
  o.finish();
}

void read_simulate(const json& v, const std::string& path, SimulateConfig& s, std::vector<ConfigIssue>& errs) {
  Obj o{v, path, errs, {}};
  choice<Process>(o, "process", s.process,
                  {{"sde", Process::Sde}, {"sr", Process::SpecialRelativistic}, {"gr", Process::GeneralRelativistic}});
  choice<sde::Interpretation>(o, "interpretation", s.interpretation,
                              {{"ito", sde::Interpretation::Ito}, {"stratonovich", sde::Interpretation::Stratonovich}});
  positive(o, "rho", s.rho);
  positive(o, "dt", s.dt);
  integer(o, "steps", s.steps, 1);
  integer(o, "paths", s.paths, 2);
  integer(o, "record_every", s.record_every, 0);
  integer(o, "record_paths", s.record_paths, 0);
  integer(o, "reorthonormalize_every", s.reorthonormalize_every, 0);
  integer(o, "state_dim", s.state_dim, 1);
  integer(o, "noise_dim", s.noise_dim, 1);
  if (const json* d = o.get("drift")) s.drift = field_list(*d, o.at("drift"), errs);
  if (const json* sg = o.get("sigma")) {
    if (!sg->is_array() || sg->empty()) {
      o.error(o.at("sigma"), "expected rows of fields");
    } else {
      s.sigma.clear();
      for (std::size_t r = 0; r < sg->size(); ++r)
        s.sigma.push_back(field_list((*sg)[r], o.at("sigma") + "/" + std::to_string(r), errs));
    }
  }
  if (const json* u = o.get("u0")) numbers(*u, 0, s.u0, o.at("u0"), errs);
  ChartPoint x0{};
  point4(o, "x0", x0);
  s.x0 = Vec4(x0[0], x0[1], x0[2], x0[3]);
  if (const json* v0 = o.get("v0")) {
    std::vector<double> x;
    if (numbers(*v0, 3, x, o.at("v0"), errs)) s.v0 = Eigen::Vector3d(x[0], x[1], x[2]);
  }
  o.finish();

  if (s.process != Process::Sde) return;
  if (s.state_dim > 4) o.error(o.at("state_dim"), "at most 4 for field-defined systems");
  if (s.noise_dim > sde::kMaxNoise) o.error(o.at("noise_dim"), "too large");
  if (s.drift.empty()) s.drift.assign(s.state_dim, ScalarField());
  if (s.sigma.empty()) {
    s.sigma.assign(s.state_dim, std::vector<ScalarField>(s.noise_dim));
    for (int k = 0; k < std::min(s.state_dim, s.noise_dim); ++k) s.sigma[k][k] = ScalarField::constant(1.0);
  }
  if (s.u0.empty()) s.u0.assign(s.state_dim, 0.0);
  if (static_cast<int>(s.drift.size()) != s.state_dim) o.error(o.at("drift"), "needs state_dim entries");
  if (static_cast<int>(s.u0.size()) != s.state_dim) o.error(o.at("u0"), "needs state_dim entries");
  if (static_cast<int>(s.sigma.size()) != s.state_dim ||
      std::any_of(s.sigma.begin(), s.sigma.end(), [&](const auto& r) { return static_cast<int>(r.size()) != s.noise_dim; }))
    o.error(o.at("sigma"), "needs state_dim rows of noise_dim fields");
  if (s.record_paths > s.paths) o.error(o.at("record_paths"), "exceeds paths");
}

void read_fp(const json& v, const std::string& path, FpConfig& f, std::vector<ConfigIssue>& errs) {
  Obj o{v, path, errs, {}};
  positive(o, "rho", f.rho);
  positive(o, "tau", f.tau);
  number(o, "dt", f.dt);
  if (f.dt < 0) o.error(o.at("dt"), "must be >= 0");
  if (const json* l = o.get("lattice"); is_object(l, o, "lattice")) {
    Obj lo{*l, o.at("lattice"), errs, {}};
    std::vector<double> axes, low, high, shape;
    fp::Boundary b = fp::Boundary::Periodic;
    const json* ja = lo.get("axes");
    const json* jl = lo.get("lo");
    const json* jh = lo.get("hi");
    const json* js = lo.get("shape");
    choice<fp::Boundary>(lo, "boundary", b, {{"periodic", fp::Boundary::Periodic}, {"absorbing", fp::Boundary::Absorbing}});
    ChartPoint base{};
    point4(lo, "base", base);
    lo.finish();
    if (!ja || !jl || !jh || !js) {
      lo.error(lo.path, "needs axes, lo, hi and shape");
    } else if (numbers(*ja, 0, axes, lo.at("axes"), errs) && numbers(*jl, axes.size(), low, lo.at("lo"), errs) &&
               numbers(*jh, axes.size(), high, lo.at("hi"), errs) &&
               numbers(*js, axes.size(), shape, lo.at("shape"), errs)) {
      std::vector<int> ax(axes.begin(), axes.end()), sh(shape.begin(), shape.end());
      try {
        f.lattice = fp::Lattice::box(ax, low, high, sh, b);
        f.lattice.base = base;
        f.lattice.validate();
      } catch (const ConfigError& e) {
        lo.error(lo.path, e.what());
      }
    }
  }
  if (const json* d = o.get("drift")) {
    const auto fs = field_list(*d, o.at("drift"), errs);
    if (fs.size() == 4)
      std::copy(fs.begin(), fs.end(), f.drift.begin());
    else if (!fs.empty())
      o.error(o.at("drift"), "needs 4 N-adapted components");
  }
  if (const json* i = o.get("initial"); is_object(i, o, "initial")) {
    Obj io{*i, o.at("initial"), errs, {}};
    point4(io, "point", f.point);
    positive(io, "gaussian_width", f.gaussian_width);
    io.finish();
  }
  o.finish();
}

void read_ensemble(const json& v, const std::string& path, EnsembleConfig& e, std::vector<ConfigIssue>& errs) {
  Obj o{v, path, errs, {}};
  read_family(o, e.family);
  read_generator(o, e.data);
  read_grid(o, e.grid);
  auto& r = e.random;
  if (const json* rj = o.get("random"); is_object(rj, o, "random")) {
    Obj ro{*rj, o.at("random"), errs, {}};
    number(ro, "varpi", r.varpi);
    if (r.varpi < 0) ro.error(ro.at("varpi"), "must be >= 0");
    choice<stochastic::TildeKind>(ro, "kind", r.kind,
                                  {{"h-diffusion", stochastic::TildeKind::HDiffusion},
                                   {"random-source", stochastic::TildeKind::RandomSource},
                                   {"brownian", stochastic::TildeKind::Brownian}});
    integer(ro, "realizations", r.realizations, 1);
    if (const json* h = ro.get("heat"); is_object(h, ro, "heat")) {
      Obj ho{*h, ro.at("heat"), errs, {}};
      positive(ho, "rho", r.heat.rho);
      double psi = 0.0;
      number(ho, "psi", psi);
      r.heat.psi = ScalarField::constant(psi);
      integer(ho, "modes", r.heat.modes, 1);
      number(ho, "amplitude", r.heat.amplitude);
      if (const json* p = ho.get("period")) {
        std::vector<double> x;
        if (numbers(*p, 2, x, ho.at("period"), errs)) r.heat.period = {x[0], x[1]};
      }
      number(ho, "bump_width", r.heat.bump_width);
      if (const json* c = ho.get("bump_center")) {
        std::vector<double> x;
        if (numbers(*c, 2, x, ho.at("bump_center"), errs)) r.heat.bump_center = {x[0], x[1]};
      }
      ho.finish();
    }
    if (const json* s = ro.get("source"); is_object(s, ro, "source")) {
      Obj so{*s, ro.at("source"), errs, {}};
      number(so, "upsilon2_amplitude", r.source.upsilon2_amplitude);
      positive(so, "correlation_length", r.source.correlation_length);
      integer(so, "features", r.source.features, 1);
      so.finish();
    }
    ro.finish();
  }
  if (const json* p = o.get("probes")) {
    if (!p->is_array()) {
      o.error(o.at("probes"), "expected an array of [i, j, k]");
    } else {
      for (std::size_t q = 0; q < p->size(); ++q) {
        const json& x = (*p)[q];
        const std::string qp = o.at("probes") + "/" + std::to_string(q);
        if (!x.is_array() || x.size() != 3 || !std::all_of(x.begin(), x.end(), [](const json& i) { return i.is_number_integer(); })) {
          o.error(qp, "expected [i, j, k]");
          continue;
        }
        const stochastic::GridIndex g{x[0].get<int>(), x[1].get<int>(), x[2].get<int>()};
        const auto& ax = e.grid.axes;
        if (g.i < 0 || g.j < 0 || g.k < 0 || g.i >= ax[0].n || g.j >= ax[1].n || g.k >= ax[2].n)
          o.error(qp, "outside the grid");
        else
          e.probes.push_back(g);
      }
    }
  }
  positive(o, "lc_tolerance", e.lc_tolerance);
  boolean(o, "dump_realizations", e.dump_realizations);
  o.finish();
}

void read_tolerances(const json& v, const std::string& path, Tolerances& t, std::vector<ConfigIssue>& errs) {
  Obj o{v, path, errs, {}};
  positive(o, "nil", t.nil);
  positive(o, "cross_check", t.cross_check);
  positive(o, "nonmetricity", t.nonmetricity);
  positive(o, "residual", t.residual);
  positive(o, "psi", t.psi);
  positive(o, "constraint", t.constraint);
  positive(o, "frame", t.frame);
  positive(o, "mass", t.mass);
  positive(o, "realization", t.realization);
  positive(o, "accept_fraction", t.accept_fraction);
  if (t.accept_fraction > 1) o.error(o.at("accept_fraction"), "must be <= 1");
  o.finish();
}

int line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

}  // namespace

ParseResult parse_config(const std::string& text, std::optional<std::uint64_t> seed_override) {
  ParseResult res;
  auto& errs = res.errors;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte is one past the offending character.
    errs.push_back({"", line_of(text, e.byte > 0 ? e.byte - 1 : 0), e.what()});
    return res;
  }
  if (!doc.is_object()) {
    errs.push_back({"", 0, "the document must be a JSON object"});
    return res;
  }
  RunConfig cfg;
  Obj top{doc, "", errs, {}};
  const json* cmd = top.get("command");
  if (!cmd) top.error("/command", "required");
  choice<Command>(top, "command", cfg.command,
                  {{"geometry-check", Command::GeometryCheck},
                   {"solve", Command::Solve},
                   {"simulate", Command::Simulate},
                   {"fp-evolve", Command::FpEvolve},
                   {"ensemble", Command::Ensemble}});
  integer(top, "seed", cfg.seed, 0);
  if (const json* t = top.get("threads")) {
    if (!t->is_number_integer() || t->get<long long>() < 1)
      top.error("/threads", "expected a positive integer");
    else
      cfg.threads = t->get<int>();
  }
  if (const json* out = top.get("output")) {
    if (!out->is_string() || out->get<std::string>().empty())
      top.error("/output", "expected a directory name");
    else
      cfg.output = out->get<std::string>();
  }
  if (const json* t = top.get("tolerances"); is_object(t, top, "tolerances")) read_tolerances(*t, "/tolerances", cfg.tol, errs);

  // Each section is read when present; a section the command does not use is an error.
  const std::map<std::string, std::set<Command>> users{
      {"spec", {Command::GeometryCheck, Command::Simulate, Command::FpEvolve}},
      {"geometry", {Command::GeometryCheck}},
      {"solve", {Command::Solve}},
      {"simulate", {Command::Simulate}},
      {"fp", {Command::FpEvolve}},
      {"ensemble", {Command::Ensemble}},
  };
  for (const auto& [name, cmds] : users) {
    const json* s = top.get(name);
    if (!is_object(s, top, name)) continue;
    if (cmd && !cmds.count(cfg.command)) {
      top.error("/" + name, "not used by command " + command_name(cfg.command));
      continue;
    }
    const std::string p = "/" + name;
    if (name == "spec") read_spec(*s, p, cfg, errs);
    if (name == "geometry") read_geometry(*s, p, cfg.geometry, errs);
    if (name == "solve") read_solve(*s, p, cfg.solve, errs);
    if (name == "simulate") read_simulate(*s, p, cfg.simulate, errs);
    if (name == "fp") read_fp(*s, p, cfg.fp, errs);
    if (name == "ensemble") read_ensemble(*s, p, cfg.ensemble, errs);
  }
  top.finish();

  if (cfg.command == Command::Simulate && !doc.contains("simulate")) {
    SimulateConfig s;
    read_simulate(json::object(), "/simulate", s, errs);
    cfg.simulate = s;
  }
  if (cfg.command == Command::Simulate && cfg.simulate.process == Process::GeneralRelativistic &&
      cfg.spec.signature != std::array<int, 4>{1, 1, -1, 1})
    errs.push_back({"/spec/signature", 0, "the gr process needs signature (1, 1, -1, 1)"});

  if (seed_override) {
    cfg.seed = *seed_override;
    doc["seed"] = *seed_override;
  }
  cfg.ensemble.random.seed = cfg.seed;
  doc.erase("output");
  doc.erase("threads");
  cfg.canonical = doc.dump();
  cfg.hash = io::hex64(io::fnv1a64(cfg.canonical));
  if (errs.empty()) res.config = std::move(cfg);
  return res;
}

RunConfig load_config(const std::string& text, std::optional<std::uint64_t> seed_override) {
  ParseResult r = parse_config(text, seed_override);
  if (r.config) return std::move(*r.config);
  std::ostringstream os;
  os << r.errors.size() << " configuration error" << (r.errors.size() == 1 ? "" : "s") << ":";
  for (const auto& e : r.errors) os << "\n  " << e.str();
  throw ConfigError(os.str());
}

}  // namespace nhdiff::app
