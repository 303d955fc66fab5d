#include "nhdiff/app/commands.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "nhdiff/relativistic.hpp"
#include "nhdiff/stats.hpp"

namespace nhdiff::app {

using json = nlohmann::json;

bool RunReport::passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

std::string RunReport::to_json() const {
  json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["wall_seconds"] = wall_seconds;
  j["passed"] = passed();
  j["checks"] = json::array();
  for (const auto& c : checks)
    j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance},
                           {"detail", c.detail}});
  j["norms"] = json::object();
  for (const auto& [k, v] : norms) j["norms"][k] = v;
  j["manifest"] = json::array();
  for (const auto& m : manifest) j["manifest"].push_back({{"path", m.path}, {"bytes", m.bytes}, {"fnv1a64", m.checksum}});
  return j.dump(2) + "\n";
}

namespace {

struct Context {
  const RunConfig& cfg;
  int threads;
  std::filesystem::path out;
  RunReport& report;

  void write(const std::string& name, const std::string& content) {
    report.manifest.push_back(io::write_text(out, name, content));
  }
  // Passes when value < tolerance.
  void check(const std::string& name, double value, double tolerance, std::string detail = {}) {
    report.checks.push_back({name, value < tolerance, value, tolerance, std::move(detail)});
  }
  void norm(const std::string& name, double v) { report.norms.emplace_back(name, v); }
};

// ---------------------------------------------------------------- geometry-check

void geometry_check(Context& ctx) {
  const auto& cfg = ctx.cfg;
  geometry::MetricSpec fd = cfg.spec;
  fd.mode = geometry::DerivativeMode::FiniteDifference;
  io::CsvWriter comps({"point", "object", "c", "a", "b", "value"});
  std::vector<std::string> head{"point", "x1", "x2", "y3", "y4", "max_connection", "max_torsion", "max_anholonomy",
                                "max_distortion", "nonmetricity"};
  if (cfg.cross_check) head.push_back("cross_check");
  io::CsvWriter summary(head);
  double worst_nil = 0.0, worst_q = 0.0, worst_cross = 0.0;
  for (std::size_t p = 0; p < cfg.geometry.points.size(); ++p) {
    const ChartPoint& u = cfg.geometry.points[p];
    const geometry::MetricSample s = geometry::sample(cfg.spec, u);
    const Tensor3 G = geometry::canonical_dconnection(s);
    const Tensor3 W = geometry::anholonomy(s);
    const Tensor3 T = geometry::torsion(G, W);
    const Tensor3 Z = geometry::distortion(s);
    const std::pair<const char*, const Tensor3*> objects[] = {
        {"connection", &G}, {"torsion", &T}, {"anholonomy", &W}, {"distortion", &Z}};
    for (const auto& [name, t] : objects)
      for (int c = 0; c < 4; ++c)
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            comps.cell(static_cast<long>(p)).cell(std::string_view(name)).cell(c + 1).cell(a + 1).cell(b + 1);
            comps.cell((*t)[c](a, b)).end_row();
          }
    const double q = geometry::nonmetricity(s, G);
    summary.cell(static_cast<long>(p)).cell(u[0]).cell(u[1]).cell(u[2]).cell(u[3]);
    summary.cell(max_abs(G)).cell(max_abs(T)).cell(max_abs(W)).cell(max_abs(Z)).cell(q);
    worst_nil = std::max({worst_nil, max_abs(G), max_abs(T), max_abs(W), max_abs(Z)});
    worst_q = std::max(worst_q, q);
    if (cfg.cross_check) {
      const Tensor3 Gfd = geometry::canonical_dconnection(geometry::sample(fd, u));
      double e = 0.0;
      for (int c = 0; c < 4; ++c) e = std::max(e, (G[c] - Gfd[c]).cwiseAbs().maxCoeff());
      summary.cell(e);
      worst_cross = std::max(worst_cross, e);
    }
    summary.end_row();
  }
  ctx.write("geometry.csv", summary.str());
  ctx.write("components.csv", comps.str());
  ctx.norm("max_component", worst_nil);
  ctx.check("nonmetricity", worst_q, cfg.tol.nonmetricity);
  if (cfg.geometry.expect_nil) ctx.check("nil", worst_nil, cfg.tol.nil, "connection, torsion, anholonomy, distortion");
  if (cfg.cross_check) ctx.check("analytic-vs-fd", worst_cross, cfg.tol.cross_check);
}

// ---------------------------------------------------------------- solve

void solve(Context& ctx) {
  const SolveConfig& sc = ctx.cfg.solve;
  ansatz::GenerateOptions opt;
  opt.psi.stencil = sc.stencil;
  opt.threads = ctx.threads;
  const ansatz::AnsatzSolution sol = ansatz::generate(sc.family, sc.data, sc.grid, opt);
  const ansatz::ResidualReport r = ansatz::residuals(sol, sc.data, sc.residual_mode, sc.stencil);
  const ansatz::LcReport lc = ansatz::lc_constraint_check(sol, sc.residual_mode);
  const auto& g = sc.grid;

  io::CsvWriter field({"i", "j", "k", "x1", "x2", "t", "h3", "h4", "w1", "w2", "n1", "n2", "r2", "r3_1", "r3_2",
                       "r4_1", "r4_2"});
  for (int i = 0; i < g.axes[0].n; ++i)
    for (int j = 0; j < g.axes[1].n; ++j)
      for (int k = 0; k < g.axes[2].n; ++k) {
        const std::size_t q = g.index(i, j, k);
        field.cell(i).cell(j).cell(k).cell(g.axes[0].at(i)).cell(g.axes[1].at(j)).cell(g.axes[2].at(k));
        field.cell(sol.h3[q]).cell(sol.h4[q]).cell(sol.w[0][q]).cell(sol.w[1][q]).cell(sol.n[0][q]).cell(sol.n[1][q]);
        field.cell(r.r2[q]).cell(r.r3[0][q]).cell(r.r3[1][q]).cell(r.r4[0][q]).cell(r.r4[1][q]).end_row();
      }
  io::CsvWriter psi({"i", "j", "x1", "x2", "psi", "r1"});
  for (int i = 0; i < g.axes[0].n; ++i)
    for (int j = 0; j < g.axes[1].n; ++j) {
      const std::size_t q = std::size_t(i) * g.axes[1].n + j;
      psi.cell(i).cell(j).cell(g.axes[0].at(i)).cell(g.axes[1].at(j)).cell(sol.psi[q]).cell(r.r1[q]).end_row();
    }
  ctx.write("solution.csv", field.str());
  ctx.write("psi.csv", psi.str());

  json lcj{{"pass", lc.pass},
           {"tolerance", lc.tolerance},
           {"max_torsion", lc.max_torsion},
           {"max_w_curl", lc.max_w_curl},
           {"max_n_t", lc.max_n_t},
           {"max_n_curl", lc.max_n_curl}};
  json res{{"family", ansatz::family_name(sc.family)},
           {"r1", {{"max", r.n1.max}, {"rms", r.n1.l2}}},
           {"r2", {{"max", r.n2.max}, {"rms", r.n2.l2}}},
           {"r3", {{"max", r.n3.max}, {"rms", r.n3.l2}}},
           {"r4", {{"max", r.n4.max}, {"rms", r.n4.l2}}},
           {"psi_residual", sol.psi_residual},
           {"levi_civita", lcj}};
  ctx.write("residuals.json", res.dump(2) + "\n");
  ctx.norm("r1_max", r.n1.max);
  ctx.norm("r2_max", r.n2.max);
  ctx.norm("r3_max", r.n3.max);
  ctx.norm("r4_max", r.n4.max);
  ctx.norm("lc_max_violation", lc.max());
  ctx.check("residual", r.max_234(), ctx.cfg.tol.residual, "max-norm of r2, r3, r4");
  ctx.check("psi", sol.psi_residual, ctx.cfg.tol.psi, "psi stencil residual");
}

// ---------------------------------------------------------------- simulate

void write_paths(Context& ctx, const sde::PathEnsemble& ens, const std::vector<std::string>& names) {
  std::vector<std::string> head{"path"};
  head.insert(head.end(), names.begin(), names.end());
  io::CsvWriter term(head);
  for (long p = 0; p < ens.paths; ++p) {
    term.cell(p);
    for (int c = 0; c < ens.state_dim; ++c) term.cell(ens.terminal_at(p, c));
    term.end_row();
  }
  ctx.write("terminal.csv", term.str());
  if (ens.recorded_paths > 0) {
    std::vector<std::string> th{"path", "record", "tau"};
    th.insert(th.end(), names.begin(), names.end());
    io::CsvWriter traj(th);
    const long R = ens.records_per_path();
    for (long p = 0; p < ens.recorded_paths; ++p)
      for (long r = 0; r < R; ++r) {
        traj.cell(p).cell(r).cell(double(r * ens.record_every) * ens.dt);
        for (int c = 0; c < ens.state_dim; ++c) traj.cell(ens.trajectories[(p * R + r) * ens.state_dim + c]);
        traj.end_row();
      }
    ctx.write("trajectories.csv", traj.str());
  }
  json mom = json::array();
  std::vector<double> x(ens.paths);
  for (int c = 0; c < ens.state_dim; ++c) {
    for (long p = 0; p < ens.paths; ++p) x[p] = ens.terminal_at(p, c);
    const auto m = stats::moments(x);
    mom.push_back({{"component", names[c]}, {"mean", m.mean}, {"mean_stderr", m.mean_stderr}, {"variance", m.variance},
                   {"variance_stderr", m.variance_stderr}});
  }
  ctx.write("moments.json", json{{"paths", ens.paths}, {"steps", ens.steps}, {"dt", ens.dt}, {"terminal", mom}}.dump(2) + "\n");
}

void simulate(Context& ctx) {
  const SimulateConfig& s = ctx.cfg.simulate;
  sde::WienerConfig w{s.rho, 1, ctx.cfg.seed, s.dt, s.steps};
  if (s.process == Process::Sde) {
    sde::SDESystem sys;
    sys.state_dim = s.state_dim;
    sys.noise_dim = s.noise_dim;
    sys.interpretation = s.interpretation;
    const auto chart = [](const sde::State& u) {
      ChartPoint p{};
      for (int k = 0; k < u.size(); ++k) p[k] = u(k);
      return p;
    };
    sys.sigma = [s, chart](double, const sde::State& u) {
      const ChartPoint p = chart(u);
      sde::NoiseMatrix m(s.state_dim, s.noise_dim);
      for (int a = 0; a < s.state_dim; ++a)
        for (int k = 0; k < s.noise_dim; ++k) m(a, k) = s.sigma[a][k](p);
      return m;
    };
    sys.drift = [s, chart](double, const sde::State& u) {
      const ChartPoint p = chart(u);
      sde::State b(s.state_dim);
      for (int a = 0; a < s.state_dim; ++a) b(a) = s.drift[a](p);
      return b;
    };
    sde::IntegrationOptions opt;
    opt.wiener = w;
    opt.wiener.dim = s.noise_dim;
    opt.paths = s.paths;
    opt.u0 = Eigen::Map<const Eigen::VectorXd>(s.u0.data(), s.state_dim);
    opt.threads = ctx.threads;
    opt.record_every = s.record_every;
    opt.record_paths = s.record_paths;
    const sde::PathEnsemble ens = sde::integrate(sys, opt);
    std::vector<std::string> names;
    for (int k = 0; k < s.state_dim; ++k) names.push_back("u" + std::to_string(k + 1));
    write_paths(ctx, ens, names);
    return;
  }

  relativistic::RelativisticState s0;
  s0.u = s.x0;
  s0.v_hat = s.v0;
  s0.E = relativistic::fiber_frame(s.v0);
  relativistic::RelativisticOptions opt;
  opt.wiener = w;
  opt.wiener.dim = 3;
  opt.paths = s.paths;
  opt.threads = ctx.threads;
  opt.reorthonormalize_every = s.reorthonormalize_every;
  opt.record_every = s.record_every;
  opt.record_paths = s.record_paths;
  const sde::PathEnsemble ens = s.process == Process::SpecialRelativistic
                                    ? relativistic::sr_relativistic_diffusion(s0, opt)
                                    : relativistic::gr_relativistic_diffusion(ctx.cfg.spec, s0, opt);
  write_paths(ctx, ens, {"x1", "x2", "y3", "y4", "v1", "v2", "v4", "E11", "E21", "E31", "E12", "E22", "E32", "E13",
                         "E23", "E33"});

  // The fiber frame is only orthonormal to 1e-6 right after re-orthonormalization.
  const long K = s.reorthonormalize_every;
  double constraint = 0.0, frame = 0.0;
  long frame_samples = 0;
  const auto visit = [&](const double* st, long step) {
    const auto r = relativistic::RelativisticState::unpack(st);
    constraint = std::max(constraint, relativistic::constraint_violation(relativistic::four_velocity(r.v_hat)));
    if (K > 0 && step % K == 0) {
      frame = std::max(frame, relativistic::fiber_frame_error(r.v_hat, r.E));
      ++frame_samples;
    }
  };
  for (long p = 0; p < ens.paths; ++p) visit(&ens.terminal[p * ens.state_dim], ens.steps);
  const long R = ens.records_per_path();
  for (long p = 0; p < ens.recorded_paths; ++p)
    for (long r = 0; r < R; ++r) visit(&ens.trajectories[(p * R + r) * ens.state_dim], r * ens.record_every);
  ctx.check("constraint", constraint, ctx.cfg.tol.constraint, "max |eta v v + 1|");
  if (frame_samples > 0)
    ctx.check("fiber-frame", frame, ctx.cfg.tol.frame, "Gram error at re-orthonormalization steps");
}

// ---------------------------------------------------------------- fp-evolve

void fp_evolve(Context& ctx) {
  const FpConfig& f = ctx.cfg.fp;
  const auto drift = f.drift;
  const fp::DriftField A = [drift](const ChartPoint& u) {
    return Vec4(drift[0](u), drift[1](u), drift[2](u), drift[3](u));
  };
  const fp::Generator B = fp::build_backward_generator(ctx.cfg.spec, A, f.rho, f.lattice);
  const fp::Generator F = fp::forward_generator(B);
  fp::DensityGrid phi0;
  if (f.gaussian_width > 0) {
    phi0.lattice = f.lattice;
    phi0.weight = F.weight;
    phi0.values = fp::sample_on(f.lattice, [&](const ChartPoint& u) {
      double r2 = 0.0;
      for (int d : f.lattice.axes) r2 += (u[d] - f.point[d]) * (u[d] - f.point[d]);
      return std::exp(-r2 / (2 * f.gaussian_width));
    });
    phi0.values /= phi0.mass();
  } else {
    phi0 = fp::point_mass(f.lattice, F.weight, f.point);
  }
  const double dt = f.dt > 0 ? f.dt : 0.9 * F.stable_dt();
  const fp::EvolveReport rep = fp::evolve_density(F, phi0, f.tau, dt, ctx.threads);

  const auto& lat = f.lattice;
  std::vector<std::string> head;
  for (int d = 0; d < lat.dims(); ++d) head.push_back("i" + std::to_string(d + 1));
  for (int d = 0; d < lat.dims(); ++d) head.push_back("u" + std::to_string(lat.axes[d] + 1));
  head.push_back("density");
  io::CsvWriter dens(head);
  for (std::size_t q = 0; q < lat.size(); ++q) {
    const auto m = lat.multi(q);
    for (int d = 0; d < lat.dims(); ++d) dens.cell(m[d]);
    for (int d = 0; d < lat.dims(); ++d) dens.cell(lat.coordinate(q, d));
    dens.cell(rep.density.values(static_cast<long>(q))).end_row();
  }
  io::CsvWriter mass({"step", "tau", "mass"});
  mass.cell(0).cell(0.0).cell(phi0.mass()).end_row();
  for (std::size_t k = 0; k < rep.mass_history.size(); ++k)
    mass.cell(static_cast<long>(k + 1)).cell(double(k + 1) * rep.dt).cell(rep.mass_history[k]).end_row();
  ctx.write("density.csv", dens.str());
  ctx.write("mass.csv", mass.str());

  const double drift_mass = std::abs(rep.density.mass() - phi0.mass());
  ctx.norm("steps", double(rep.steps));
  ctx.norm("dt", rep.dt);
  ctx.norm("min_before_clamp", rep.min_before_clamp);
  ctx.norm("mass_change", drift_mass);
  if (lat.boundary == fp::Boundary::Periodic) ctx.check("mass", drift_mass, ctx.cfg.tol.mass, "periodic mass conservation");
}

// ---------------------------------------------------------------- ensemble

void ensemble(Context& ctx) {
  const EnsembleConfig& e = ctx.cfg.ensemble;
  stochastic::EnsembleOptions opt;
  opt.tolerance = ctx.cfg.tol.realization;
  opt.lc_tolerance = e.lc_tolerance;
  opt.threads = ctx.threads;
  opt.keep_solutions = false;
  opt.probes = e.probes;
  const stochastic::MetricEnsemble ens = stochastic::generate_ensemble(e.family, e.data, e.random, e.grid, opt);

  const long n = static_cast<long>(ens.realizations.size());
  const long acc = ens.accepted();
  double max_res = 0.0, mean_res = 0.0;
  long lc_pass = 0;
  for (const auto& r : ens.realizations)
    if (r.accepted) {
      max_res = std::max(max_res, r.residual);
      mean_res += r.residual / double(acc);
    }
  const auto lc = stochastic::lc_transition_report(ens);
  json dominant = json::object();
  for (const auto& l : lc) {
    if (l.compatible) ++lc_pass;
    else dominant[l.dominant] = dominant.value(l.dominant, 0) + 1;
  }

  json stats = json::object();
  if (acc >= 2 && !e.probes.empty()) {
    for (const char* name : {"h3", "h4", "w1", "w2", "n1", "n2"}) {
      const auto st = stochastic::ensemble_statistics(ens, stochastic::coefficient_from_name(name), e.probes);
      json pts = json::array();
      for (std::size_t q = 0; q < e.probes.size(); ++q)
        pts.push_back({{"index", {e.probes[q].i, e.probes[q].j, e.probes[q].k}},
                       {"mean", st.mean[q]},
                       {"mean_stderr", st.mean_stderr[q]},
                       {"variance", st.covariance(long(q), long(q))}});
      stats[name] = pts;
    }
  }
  json out{{"family", ansatz::family_name(e.family)},
           {"varpi", e.random.varpi},
           {"realizations", n},
           {"accepted", acc},
           {"accepted_fraction", double(acc) / double(n)},
           {"residual", {{"max", max_res}, {"mean", mean_res}, {"tolerance", ctx.cfg.tol.realization}}},
           {"levi_civita", {{"compatible", lc_pass}, {"distorted_by", dominant}}},
           {"probes", stats}};
  ctx.write("ensemble.json", out.dump(2) + "\n");

  if (e.dump_realizations) {
    std::vector<std::string> head{"index", "built", "accepted", "reason", "residual", "r2", "r3", "r4", "lc_pass",
                                  "lc_dominant"};
    const char* coef[] = {"h3", "h4", "w1", "w2", "n1", "n2"};
    for (std::size_t q = 0; q < e.probes.size(); ++q)
      for (const char* c : coef) head.push_back(std::string(c) + "@" + std::to_string(q));
    io::CsvWriter csv(head);
    for (const auto& r : ens.realizations) {
      csv.cell(r.index).cell(int(r.built)).cell(int(r.accepted)).cell(std::string_view(r.reason));
      csv.cell(r.residual).cell(r.r2).cell(r.r3).cell(r.r4).cell(int(r.lc.pass)).cell(std::string_view(r.lc.dominant));
      for (std::size_t q = 0; q < e.probes.size(); ++q)
        for (int c = 0; c < stochastic::kCoefficients; ++c) {
          if (r.built) csv.cell(r.probes[c][q]);
          else csv.cell(std::string_view(""));
        }
      csv.end_row();
    }
    ctx.write("realizations.csv", csv.str());
  }
  ctx.norm("accepted", double(acc));
  ctx.norm("residual_max", max_res);
  ctx.norm("lc_compatible", double(lc_pass));
  ctx.report.checks.push_back({"acceptance", double(acc) >= ctx.cfg.tol.accept_fraction * double(n),
                               double(acc) / double(n), ctx.cfg.tol.accept_fraction,
                               "fraction of realizations with residual below the tolerance (passes when >=)"});
}

}  // namespace

RunReport run(const RunConfig& cfg, int threads, const std::filesystem::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.command = command_name(cfg.command);
  report.config_hash = cfg.hash;
  report.seed = cfg.seed;
  Context ctx{cfg, std::max(1, threads), out, report};
  ctx.write("config.json", cfg.canonical + "\n");
  switch (cfg.command) {
    case Command::GeometryCheck: geometry_check(ctx); break;
    case Command::Solve: solve(ctx); break;
    case Command::Simulate: simulate(ctx); break;
    case Command::FpEvolve: fp_evolve(ctx); break;
    case Command::Ensemble: ensemble(ctx); break;
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_text(out, "report.json", report.to_json());
  return report;
}

}  // namespace nhdiff::app
