#include "ergo/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ergo/control.hpp"

namespace ergo::io {

namespace {

std::filesystem::path g_base_dir;  // directory of the config being loaded

std::filesystem::path resolve(const std::string& p) {
  std::filesystem::path fp(p);
  if (fp.is_absolute() || g_base_dir.empty()) return fp;
  return g_base_dir / fp;
}

std::vector<std::vector<double>> read_csv_rows(const std::filesystem::path& path,
                                               std::size_t min_cols) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (rows.empty()) continue;  // header line
      throw ConfigError("non-numeric row in " + path.string());
    }
    if (row.size() < min_cols)
      throw ConfigError("row with too few columns in " + path.string());
    rows.push_back(std::move(row));
  }
  return rows;
}

// index columns: circle rows are (i, values...), torus rows are (i, j, values...)
Eigen::Index row_index(const Geometry& geom, const std::vector<double>& row, int& value_col) {
  if (geom.dim() == 1) {
    value_col = 1;
    const auto i = static_cast<Eigen::Index>(std::llround(row[0]));
    if (i < 0 || i >= geom.size()) throw ConfigError("node index out of range in CSV");
    return i;
  }
  value_col = 2;
  const auto i1 = static_cast<int>(std::llround(row[0]));
  const auto i2 = static_cast<int>(std::llround(row[1]));
  if (i1 < 0 || i1 >= geom.grid.n1 || i2 < 0 || i2 >= geom.grid.n2)
    throw ConfigError("node index out of range in CSV");
  return geom.grid.index(i1, i2);
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17e", v);
  return buf;
}

ScalarField load_scalar_csv(const Geometry& geom, const std::filesystem::path& path) {
  auto rows = read_csv_rows(path, geom.dim() == 1 ? 2 : 3);
  if (static_cast<Eigen::Index>(rows.size()) != geom.size())
    throw ConfigError("CSV row count does not match grid in " + path.string());
  ScalarField f = ScalarField::Zero(geom.size());
  for (const auto& row : rows) {
    int vc = 0;
    const Eigen::Index idx = row_index(geom, row, vc);
    f[idx] = row[vc];
  }
  return f;
}

OneForm load_one_form_csv(const Geometry& geom, const std::filesystem::path& path) {
  const int m = geom.dim();
  auto rows = read_csv_rows(path, m == 1 ? 2 : 4);
  if (static_cast<Eigen::Index>(rows.size()) != geom.size())
    throw ConfigError("CSV row count does not match grid in " + path.string());
  OneForm w(m, geom.size());
  for (const auto& row : rows) {
    int vc = 0;
    Eigen::Index idx = row_index(geom, row, vc);
    for (int k = 0; k < m; ++k) w.comp(k)[idx] = row[vc + k];
  }
  return w;
}

ScalarField scalar_from_json(const Geometry& geom, const json& j) {
  const Eigen::Index N = geom.size();
  if (j.is_null()) return ScalarField::Zero(N);
  if (j.contains("csv")) return load_scalar_csv(geom, resolve(j["csv"].get<std::string>()));
  const std::string preset = j.value("preset", "zero");
  if (preset == "zero") return ScalarField::Zero(N);
  if (preset == "constant") return ScalarField::Constant(N, j.value("value", 0.0));
  if (preset == "cos" || preset == "sin") {
    const double a = j.value("amplitude", 1.0);
    const double k = j.value("harmonic", 1.0);
    const int axis = j.value("axis", 0);
    if (axis < 0 || axis >= geom.dim()) throw ConfigError("field preset axis out of range");
    ScalarField f(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const double t = axis == 0 ? geom.grid.coord1(i) : geom.grid.coord2(i);
      f[i] = preset == "cos" ? a * std::cos(k * t) : a * std::sin(k * t);
    }
    return f;
  }
  if (preset == "sum") {
    ScalarField f = ScalarField::Zero(N);
    for (const auto& term : j.at("terms")) f += scalar_from_json(geom, term);
    return f;
  }
  throw ConfigError("unknown scalar preset '" + preset + "'");
}

OneForm one_form_from_json(const Geometry& geom, const json& j) {
  const int m = geom.dim();
  const Eigen::Index N = geom.size();
  if (j.is_null()) return OneForm(m, N);
  if (j.contains("csv")) return load_one_form_csv(geom, resolve(j["csv"].get<std::string>()));
  const std::string preset = j.value("preset", "zero");
  if (preset == "zero") return OneForm(m, N);
  if (preset == "constant_one_form") {
    OneForm w(m, N);
    const auto& c = j.at("c");
    if (static_cast<int>(c.size()) != m)
      throw ConfigError("constant_one_form needs one coefficient per axis");
    for (int k = 0; k < m; ++k) w.comp(k).setConstant(c[k].get<double>());
    return w;
  }
  if (preset == "gradient") {
    const double s = j.value("scale", 1.0);
    ScalarField U = scalar_from_json(geom, j.at("of"));
    return s * geom.d0(U);
  }
  if (preset == "harmonic") {
    if (m == 1) {
      const double wgt = j.value("weight", 1.0);
      return harmonic_gauge(geom, {CyclePoint{0.0, wgt}});
    }
    return harmonic_gauge(geom, j.value("p", 1), j.value("q", 0));
  }
  if (preset == "sum") {
    OneForm w(m, N);
    for (const auto& term : j.at("terms")) w += one_form_from_json(geom, term);
    return w;
  }
  throw ConfigError("unknown one-form preset '" + preset + "'");
}

MetricSamples metric_from_json(ManifoldKind kind, int n1, int n2, const json& j,
                               const std::filesystem::path& base_dir) {
  const Eigen::Index N = static_cast<Eigen::Index>(n1) * (kind == ManifoldKind::Circle ? 1 : n2);
  MetricSamples s;
  const std::string preset = j.is_null() ? "flat" : j.value("preset", j.contains("csv") ? "csv" : "flat");
  if (preset == "csv") {
    // Build a flat geometry for index bookkeeping only.
    Geometry tmp = build_flat_geometry(kind, n1, n2);
    const int m = tmp.dim();
    auto rows = read_csv_rows(base_dir.empty() ? std::filesystem::path(j["csv"].get<std::string>())
                                               : base_dir / j["csv"].get<std::string>(),
                              m == 1 ? 2 : 5);
    if (static_cast<Eigen::Index>(rows.size()) != N)
      throw ConfigError("metric CSV row count does not match grid");
    s.g11.resize(N);
    if (m == 2) {
      s.g12.resize(N);
      s.g22.resize(N);
    }
    for (const auto& row : rows) {
      int vc = 0;
      Eigen::Index idx = row_index(tmp, row, vc);
      s.g11[idx] = row[vc];
      if (m == 2) {
        s.g12[idx] = row[vc + 1];
        s.g22[idx] = row[vc + 2];
      }
    }
    return s;
  }
  if (preset == "flat") {
    s.g11 = Eigen::VectorXd::Ones(N);
    if (kind == ManifoldKind::Torus) {
      s.g12 = Eigen::VectorXd::Zero(N);
      s.g22 = Eigen::VectorXd::Ones(N);
    }
    return s;
  }
  if (preset == "conformal") {
    // g_11 = (c0 + a cos theta_1)^2, and on the torus likewise for g_22
    // along axis 2; off-diagonal stays zero.
    const double c0 = j.value("c0", 2.0);
    const double a = j.value("a", 1.0);
    Geometry tmp = build_flat_geometry(kind, n1, n2);
    s.g11.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const double v = c0 + a * std::cos(tmp.grid.coord1(i));
      s.g11[i] = v * v;
    }
    if (kind == ManifoldKind::Torus) {
      const double c02 = j.value("c0_2", c0);
      const double a2 = j.value("a_2", 0.0);
      s.g12 = Eigen::VectorXd::Zero(N);
      s.g22.resize(N);
      for (Eigen::Index i = 0; i < N; ++i) {
        const double v = c02 + a2 * std::cos(tmp.grid.coord2(i));
        s.g22[i] = v * v;
      }
    }
    return s;
  }
  throw ConfigError("unknown metric preset '" + preset + "'");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  g_base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path();

  RunConfig rc;
  rc.echo = j;
  if (!j.contains("manifold")) throw ConfigError("config needs a 'manifold' block");
  const auto& man = j["manifold"];
  const std::string kind_s = man.value("kind", "circle");
  ManifoldKind kind;
  if (kind_s == "circle")
    kind = ManifoldKind::Circle;
  else if (kind_s == "torus")
    kind = ManifoldKind::Torus;
  else
    throw ConfigError("manifold.kind must be 'circle' or 'torus'");
  const int n1 = kind == ManifoldKind::Circle ? man.value("n", 0) : man.value("nx", 0);
  const int n2 = kind == ManifoldKind::Circle ? 1 : man.value("ny", 0);
  MetricSamples ms = metric_from_json(kind, n1, n2, man.contains("metric") ? man["metric"] : json(),
                                      g_base_dir);
  rc.geom = std::make_shared<Geometry>(build_geometry(kind, n1, n2, ms));

  rc.spec.geom = rc.geom;
  rc.spec.lambda = j.value("lambda", 1.0);
  if (!(rc.spec.lambda > 0)) throw ConfigError("lambda must be positive");
  rc.spec.V = scalar_from_json(*rc.geom, j.contains("V") ? j["V"] : json());
  rc.spec.f = one_form_from_json(*rc.geom, j.contains("f") ? j["f"] : json());
  rc.spec.A = one_form_from_json(*rc.geom, j.contains("A") ? j["A"] : json());

  if (!j.contains("problem")) throw ConfigError("config needs a 'problem' block");
  const auto& pb = j["problem"];
  const std::string variant = pb.value("variant", "");
  if (variant == "unconstrained") {
    rc.spec.variant = ProblemVariant::Unconstrained;
  } else if (variant == "symmetrizable") {
    rc.spec.variant = ProblemVariant::Symmetrizable;
  } else if (variant == "fixed_density") {
    rc.spec.variant = ProblemVariant::FixedDensity;
    ScalarField rho = scalar_from_json(*rc.geom, pb.at("rho"));
    for (Eigen::Index i = 0; i < rho.size(); ++i)
      if (!(rho[i] > 0)) throw ConfigError("fixed density must be positive everywhere");
    rc.spec.rho_target = rho / rc.geom->quad(rho);  // normalized on load
  } else if (variant == "fixed_current") {
    rc.spec.variant = ProblemVariant::FixedCurrent;
    rc.spec.J_target = one_form_from_json(*rc.geom, pb.at("J"));
  } else {
    throw ConfigError("problem.variant must be one of unconstrained, fixed_density, "
                      "fixed_current, symmetrizable");
  }

  if (j.contains("solver")) {
    const auto& s = j["solver"];
    rc.spec.tol.lin_tol = s.value("lin_tol", rc.spec.tol.lin_tol);
    rc.spec.tol.newton_tol = s.value("newton_tol", rc.spec.tol.newton_tol);
    rc.spec.tol.eig_max_iter = s.value("eig_max_iter", rc.spec.tol.eig_max_iter);
    rc.spec.tol.newton_max_iter = s.value("newton_max_iter", rc.spec.tol.newton_max_iter);
  }

  if (j.contains("simulation")) {
    rc.has_simulation = true;
    const auto& s = j["simulation"];
    rc.sim.dt = s.value("dt", rc.sim.dt);
    rc.sim.T = s.value("T", rc.sim.T);
    rc.sim.burn_in = s.value("burn_in", rc.sim.burn_in);
    rc.sim.seed = s.value("seed", rc.sim.seed);
    rc.sim.bins = s.value("bins", rc.sim.bins);
    rc.sim.trajectories = s.value("trajectories", rc.sim.trajectories);
    if (s.contains("x0")) {
      const auto& x0 = s["x0"];
      for (std::size_t k = 0; k < x0.size() && k < 2; ++k) rc.sim.x0[k] = x0[k].get<double>();
    }
  }
  if (j.contains("output")) rc.out_dir = j["output"].value("dir", rc.out_dir);
  return rc;
}

// ---------------------------------------------------------------------------
// writers
// ---------------------------------------------------------------------------

void write_solution_csv(const std::filesystem::path& path, const Geometry& geom,
                        const SolveResult& r) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const int m = geom.dim();
  out << (m == 1 ? "theta1" : "theta1,theta2") << ",rho,potential";
  for (int k = 0; k < m; ++k) out << ",u" << k + 1;
  for (int k = 0; k < m; ++k) out << ",J" << k + 1;
  out << "\n";
  for (Eigen::Index i = 0; i < geom.size(); ++i) {
    out << format_double(geom.grid.coord1(i));
    if (m == 2) out << "," << format_double(geom.grid.coord2(i));
    out << "," << format_double(r.rho[i]) << "," << format_double(r.potential[i]);
    for (int k = 0; k < m; ++k) out << "," << format_double(r.u.comp(k)[i]);
    for (int k = 0; k < m; ++k) out << "," << format_double(r.J.comp(k)[i]);
    out << "\n";
  }
}

namespace {
json cost_json(const CostBreakdown& c) {
  return json{{"state", c.state}, {"control", c.control}, {"gauge", c.gauge}, {"total", c.total}};
}
const char* variant_name(ProblemVariant v) {
  switch (v) {
    case ProblemVariant::Unconstrained: return "unconstrained";
    case ProblemVariant::FixedDensity: return "fixed_density";
    case ProblemVariant::FixedCurrent: return "fixed_current";
    case ProblemVariant::Symmetrizable: return "symmetrizable";
  }
  return "?";
}
const char* potential_name(PotentialKind k) {
  switch (k) {
    case PotentialKind::Psi: return "psi";
    case PotentialKind::Phi: return "Phi";
    case PotentialKind::SqrtDensity: return "phi";
  }
  return "?";
}
}  // namespace

void write_diagnostics_json(const std::filesystem::path& path, const RunConfig& cfg,
                            const SolveResult& r) {
  json d;
  d["version"] = "ergoctrl 0.1.0";
  d["variant"] = variant_name(cfg.spec.variant);
  d["potential_kind"] = potential_name(r.potential_kind);
  if (r.mu) d["mu"] = *r.mu;
  else d["mu"] = nullptr;
  d["cost"] = cost_json(r.cost);
  if (r.value_identity_cost) d["value_identity_cost"] = *r.value_identity_cost;
  d["residuals"] = {
      {"pde", r.residuals.pde},
      {"hjb_residual", r.residuals.pde},
      {"delta_J", r.residuals.delta_J},
      {"fokker_planck", r.residuals.fokker_planck},
      {"triple", r.residuals.triple},
      {"curl", r.residuals.curl},
  };
  d["iterations"] = {
      {"eigen", r.residuals.eig_iterations},
      {"newton", r.residuals.newton_iterations},
      {"linear", r.residuals.linear_iterations},
  };
  d["tolerances"] = {
      {"lin_tol", cfg.spec.tol.lin_tol},
      {"newton_tol", cfg.spec.tol.newton_tol},
      {"eig_max_iter", cfg.spec.tol.eig_max_iter},
      {"newton_max_iter", cfg.spec.tol.newton_max_iter},
  };
  d["warnings"] = r.warnings;
  d["config"] = cfg.echo;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << d.dump(2) << "\n";
}

void write_histogram_csv(const std::filesystem::path& path, const TrajectoryStats& stats) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const Geometry& bg = *stats.bin_geometry;
  const int m = bg.dim();
  out << (m == 1 ? "theta1" : "theta1,theta2") << ",density\n";
  for (Eigen::Index i = 0; i < bg.size(); ++i) {
    out << format_double(bg.grid.coord1(i));
    if (m == 2) out << "," << format_double(bg.grid.coord2(i));
    out << "," << format_double(stats.density[i]) << "\n";
  }
}

void write_current_csv(const std::filesystem::path& path, const TrajectoryStats& stats) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const Geometry& bg = *stats.bin_geometry;
  const int m = bg.dim();
  out << (m == 1 ? "theta1" : "theta1,theta2");
  for (int k = 0; k < m; ++k) out << ",J" << k + 1;
  out << "\n";
  for (Eigen::Index i = 0; i < bg.size(); ++i) {
    out << format_double(bg.grid.coord1(i));
    if (m == 2) out << "," << format_double(bg.grid.coord2(i));
    for (int k = 0; k < m; ++k) out << "," << format_double(stats.current.comp(k)[i]);
    out << "\n";
  }
}

namespace {
json estimate_json(const Estimate& e) { return json{{"mean", e.mean}, {"stderr", e.stderr_}}; }
}  // namespace

json mc_summary(const RunConfig& cfg, const TrajectoryStats& stats, const SolveResult* result) {
  const Geometry& geom = *cfg.geom;
  json s;
  s["seed"] = cfg.sim.seed;
  s["T"] = cfg.sim.T;
  s["dt"] = cfg.sim.dt;
  s["bins"] = cfg.sim.bins;
  s["trajectories"] = cfg.sim.trajectories;
  s["T_effective"] = stats.T_effective;
  s["steps"] = stats.steps;
  s["estimates"] = {
      {"cost_state", estimate_json(stats.cost_state)},
      {"cost_control", estimate_json(stats.cost_control)},
      {"cost_gauge", estimate_json(stats.cost_gauge)},
      {"cost_total", estimate_json(stats.cost_total)},
      {"strat_minus_ito", estimate_json(stats.strat_minus_ito)},
      {"delta_current_norm", stats.delta_current_norm},
  };
  json winding = json::array();
  for (int k = 0; k < geom.dim(); ++k) winding.push_back(estimate_json(stats.winding[k]));
  s["estimates"]["winding"] = winding;
  s["warnings"] = stats.warnings;

  if (result) {
    const Geometry& bg = *stats.bin_geometry;
    json checks;
    bool all_ok = true;

    // density L1 distance against the solution density, interpolated to bins
    double l1 = 0.0;
    for (Eigen::Index i = 0; i < bg.size(); ++i) {
      const double ref = interpolate_scalar(geom, result->rho, bg.grid.coord1(i),
                                            bg.grid.coord2(i));
      l1 += std::abs(stats.density[i] - ref) * bg.w0[i];
    }
    const bool density_ok = l1 < 0.05;
    checks["density_l1"] = {{"value", l1}, {"threshold", 0.05}, {"pass", density_ok}};
    all_ok = all_ok && density_ok;

    // pathwise cost against the quadrature cost; the small absolute floor
    // keeps degenerate zero-cost cases out of the statistical comparison
    const double floor3 = 1e-10;
    {
      const double analytic = result->cost.total;
      const double dev = std::abs(stats.cost_total.mean - analytic);
      const bool ok = dev <= 3.0 * stats.cost_total.stderr_ + floor3;
      checks["cost_vs_quadrature"] = {{"mc", stats.cost_total.mean},
                                      {"analytic", analytic},
                                      {"stderr", stats.cost_total.stderr_},
                                      {"within_3sigma", ok}};
      all_ok = all_ok && ok;
    }
    if (cfg.spec.variant == ProblemVariant::Unconstrained && result->mu) {
      const double analytic = -result->mu.value() / cfg.spec.lambda;
      const double dev = std::abs(stats.cost_total.mean - analytic);
      const bool ok = dev <= 3.0 * stats.cost_total.stderr_ + floor3;
      checks["cost_vs_eigenvalue"] = {{"mc", stats.cost_total.mean},
                                      {"analytic", analytic},
                                      {"stderr", stats.cost_total.stderr_},
                                      {"within_3sigma", ok}};
      all_ok = all_ok && ok;
    }

    // winding rates against the flux pairing with the harmonic representatives
    json wchecks = json::array();
    for (int k = 0; k < geom.dim(); ++k) {
      OneForm A = geom.dim() == 1 ? harmonic_gauge(geom, {CyclePoint{0.0, 1.0}})
                                  : harmonic_gauge(geom, k == 0 ? 1 : 0, k == 1 ? 1 : 0);
      const double fl = flux(geom, A, result->J);
      const Estimate rate = stats.winding[k];
      const bool ok = std::abs(rate.mean - fl) <= 3.0 * rate.stderr_ + floor3;
      wchecks.push_back({{"rate", rate.mean}, {"stderr", rate.stderr_}, {"flux", fl},
                         {"within_3sigma", ok}});
      all_ok = all_ok && ok;
    }
    checks["winding"] = wchecks;

    // empirical current L1 distance (reported, not asserted)
    {
      double cl1 = 0.0;
      for (Eigen::Index i = 0; i < bg.size(); ++i)
        for (int k = 0; k < bg.dim(); ++k) {
          const double ref = interpolate_scalar(geom, ScalarField(result->J.comp(k)),
                                                bg.grid.coord1(i), bg.grid.coord2(i));
          cl1 += std::abs(stats.current.comp(k)[i] - ref) * bg.w0[i];
        }
      checks["current_l1"] = cl1;
    }

    s["checks"] = checks;
    s["within_3sigma"] = all_ok;
  }
  return s;
}

}  // namespace ergo::io
