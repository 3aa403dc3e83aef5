#include <doctest.h>

#include <numbers>

#include "ergo/simulate.hpp"

using namespace ergo;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::shared_ptr<Geometry> flat_circle(int n) {
  return std::make_shared<Geometry>(build_flat_geometry(ManifoldKind::Circle, n));
}

ProblemSpec base_spec(std::shared_ptr<Geometry> geom) {
  ProblemSpec spec;
  spec.geom = geom;
  spec.lambda = 1.0;
  spec.V = ScalarField::Zero(geom->size());
  spec.f = OneForm(geom->dim(), geom->size());
  spec.A = OneForm(geom->dim(), geom->size());
  return spec;
}

OneForm const_form(const Geometry& g, double c1, double c2 = 0.0) {
  OneForm w(g.dim(), g.size());
  w.comp(0).setConstant(c1);
  if (g.dim() == 2) w.comp(1).setConstant(c2);
  return w;
}

SimConfig quick_cfg(double T = 200.0, std::uint64_t seed = 11) {
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.T = T;
  cfg.seed = seed;
  cfg.bins = 32;
  return cfg;
}

}  // namespace

TEST_CASE("simulation configuration is validated") {
  auto g = flat_circle(32);
  ProblemSpec spec = base_spec(g);
  OneForm u(1, 32);
  SimConfig cfg = quick_cfg();
  cfg.dt = -1;
  CHECK_THROWS_AS(simulate(spec, u, cfg), ConfigError);
  cfg = quick_cfg();
  cfg.T = 0.01;  // < 100 dt
  CHECK_THROWS_AS(simulate(spec, u, cfg), ConfigError);
  cfg = quick_cfg();
  cfg.bins = 8;
  CHECK_THROWS_AS(simulate(spec, u, cfg), ConfigError);
  cfg = quick_cfg();
  cfg.trajectories = 0;
  CHECK_THROWS_AS(simulate(spec, u, cfg), ConfigError);
}

TEST_CASE("identical seeds reproduce identical statistics") {
  auto g = flat_circle(64);
  ProblemSpec spec = base_spec(g);
  spec.f = const_form(*g, 0.5);
  OneForm u(1, 64);
  TrajectoryStats a = simulate(spec, u, quick_cfg(150.0, 42));
  TrajectoryStats b = simulate(spec, u, quick_cfg(150.0, 42));
  CHECK((a.density - b.density).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.current.data - b.current.data).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.cost_total.mean == b.cost_total.mean);
  CHECK(a.winding_count[0] == b.winding_count[0]);
  TrajectoryStats c = simulate(spec, u, quick_cfg(150.0, 43));
  CHECK((a.density - c.density).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("merging is independent of the thread count") {
  auto g = flat_circle(64);
  ProblemSpec spec = base_spec(g);
  spec.f = const_form(*g, 0.3);
  OneForm u(1, 64);
  SimConfig cfg = quick_cfg(120.0, 5);
  cfg.trajectories = 4;
  cfg.threads = 1;
  TrajectoryStats a = simulate(spec, u, cfg);
  cfg.threads = 4;
  TrajectoryStats b = simulate(spec, u, cfg);
  CHECK((a.density - b.density).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.cost_total.mean == b.cost_total.mean);
  CHECK(a.winding_count[0] == b.winding_count[0]);
}

TEST_CASE("histogram carries unit mass") {
  auto g = flat_circle(64);
  ProblemSpec spec = base_spec(g);
  OneForm u(1, 64);
  TrajectoryStats st = simulate(spec, u, quick_cfg(150.0, 3));
  const Geometry& bg = *st.bin_geometry;
  CHECK(std::abs(bg.quad(st.density) - 1.0) < 1e-12);
  CHECK(st.density.minCoeff() >= 0.0);
}

TEST_CASE("driftless diffusion on the circle equilibrates to the uniform law") {
  auto g = flat_circle(64);
  ProblemSpec spec = base_spec(g);
  OneForm u(1, 64);
  SimConfig cfg = quick_cfg(2000.0, 17);
  TrajectoryStats st = simulate(spec, u, cfg);
  const Geometry& bg = *st.bin_geometry;
  double l1 = 0.0;
  for (Eigen::Index i = 0; i < bg.size(); ++i)
    l1 += std::abs(st.density[i] - 1.0 / kTwoPi) * bg.w0[i];
  CHECK(l1 < 0.15);
  Estimate w = winding_rate(st, 0);
  CHECK(std::abs(w.mean) <= 3.0 * w.stderr_ + 1e-12);
  CHECK_THROWS_AS(winding_rate(st, 1), ConfigError);
}

TEST_CASE("driven circle: winding, current, and gauge accumulators") {
  auto g = flat_circle(64);
  ProblemSpec spec = base_spec(g);
  const double c = 0.8;
  spec.f = const_form(*g, c);
  spec.A = const_form(*g, 1.0 / kTwoPi);
  OneForm u(1, 64);
  SimConfig cfg = quick_cfg(3000.0, 23);
  TrajectoryStats st = simulate(spec, u, cfg);

  // winding rate ~ c / 2pi
  Estimate w = winding_rate(st, 0);
  CHECK(std::abs(w.mean - c / kTwoPi) <= 3.0 * w.stderr_);

  // empirical current ~ c / 2pi per bin; compare in aggregate (L1)
  const Geometry& bg = *st.bin_geometry;
  const OneForm& cur = empirical_current(st);
  double l1 = 0.0;
  for (Eigen::Index i = 0; i < bg.size(); ++i)
    l1 += std::abs(cur.comp(0)[i] - c / kTwoPi) * bg.w0[i];
  CHECK(l1 < 0.1);

  // the gauge line integral accumulates the winding; its rate matches flux
  CostBreakdown pc = pathwise_cost(st);
  CHECK(std::abs(pc.gauge - c / kTwoPi) <= 3.0 * st.cost_gauge.stderr_);
  CHECK(pc.total == doctest::Approx(pc.state + pc.control + pc.gauge).epsilon(1e-12));
}

TEST_CASE("gradient drift equilibrates to the Gibbs law") {
  const int n = 64;
  auto g = flat_circle(n);
  ProblemSpec spec = base_spec(g);
  ScalarField U(n);
  for (int i = 0; i < n; ++i) U[i] = std::cos(g->grid.theta1[i]);
  spec.f = -0.5 * g->d0(U);
  OneForm u(1, n);
  SimConfig cfg = quick_cfg(3000.0, 29);
  TrajectoryStats st = simulate(spec, u, cfg);
  const int nf = 1 << 18;
  double Z = 0.0;
  for (int i = 0; i < nf; ++i) Z += std::exp(-std::cos(kTwoPi * i / nf));
  Z *= kTwoPi / nf;
  const Geometry& bg = *st.bin_geometry;
  double l1 = 0.0;
  for (Eigen::Index i = 0; i < bg.size(); ++i)
    l1 += std::abs(st.density[i] - std::exp(-std::cos(bg.grid.theta1[i])) / Z) * bg.w0[i];
  CHECK(l1 < 0.1);
}

TEST_CASE("Stratonovich minus Ito accumulator matches the divergence correction") {
  const int n = 64;
  auto g = flat_circle(n);
  ProblemSpec spec = base_spec(g);
  ScalarField U(n);
  for (int i = 0; i < n; ++i) U[i] = std::cos(g->grid.theta1[i]);
  spec.f = -0.5 * g->d0(U);
  OneForm A(1, n);
  for (int i = 0; i < n; ++i) A.comp(0)[i] = std::sin(g->grid.theta1[i]);
  spec.A = A;
  OneForm u(1, n);
  SimConfig cfg = quick_cfg(4000.0, 31);
  TrajectoryStats st = simulate(spec, u, cfg);

  const int nf = 1 << 18;
  double Z = 0.0, num = 0.0;
  for (int i = 0; i < nf; ++i) {
    const double t = kTwoPi * i / nf;
    Z += std::exp(-std::cos(t));
    num += std::cos(t) * std::exp(-std::cos(t));  // -delta A = cos against rho
  }
  const double expect = 0.5 * num / Z;
  CHECK(std::abs(st.strat_minus_ito.mean - expect) <= 3.0 * st.strat_minus_ito.stderr_);
}

TEST_CASE("torus simulation: windings on both generators") {
  auto t = std::make_shared<Geometry>(build_flat_geometry(ManifoldKind::Torus, 24, 24));
  ProblemSpec spec = base_spec(t);
  spec.f = const_form(*t, 0.9, -0.5);
  OneForm u(2, t->size());
  SimConfig cfg;
  cfg.dt = 2e-3;
  cfg.T = 2000.0;
  cfg.seed = 37;
  cfg.bins = 16;
  TrajectoryStats st = simulate(spec, u, cfg);
  Estimate w1 = winding_rate(st, 0), w2 = winding_rate(st, 1);
  CHECK(std::abs(w1.mean - 0.9 / kTwoPi) <= 3.0 * w1.stderr_);
  CHECK(std::abs(w2.mean + 0.5 / kTwoPi) <= 3.0 * w2.stderr_);
  CHECK(std::abs(st.bin_geometry->quad(st.density) - 1.0) < 1e-12);
}

TEST_CASE("curved-metric simulation matches the solver density") {
  // conformal circle metric; the Ito drift carries the Christoffel term
  const int n = 64;
  MetricSamples ms;
  ms.g11.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v = 1.4 + 0.4 * std::cos(kTwoPi * i / n);
    ms.g11[i] = v * v;
  }
  auto g = std::make_shared<Geometry>(build_geometry(ManifoldKind::Circle, n, 1, ms));
  ProblemSpec spec = base_spec(g);
  OneForm u(1, n);
  Tolerances tol;
  ScalarField rho = stationary_density(assemble_adjoint(assemble_generator(*g, spec.f)), tol);
  SimConfig cfg = quick_cfg(4000.0, 41);
  TrajectoryStats st = simulate(spec, u, cfg);
  const Geometry& bg = *st.bin_geometry;
  double l1 = 0.0;
  for (Eigen::Index i = 0; i < bg.size(); ++i)
    l1 += std::abs(st.density[i] - interpolate_scalar(*g, rho, bg.grid.theta1[i])) * bg.w0[i];
  CHECK(l1 < 0.1);
}

TEST_CASE("meta-test: three-sigma coverage over independent seeds") {
  // reduced horizon; both estimators must cover in at least 19 of 20 runs
  auto g = flat_circle(64);
  ProblemSpec spec = base_spec(g);
  const double c = 0.8;
  spec.f = const_form(*g, c);
  spec.A = const_form(*g, 1.0 / kTwoPi);
  OneForm u(1, 64);
  int wind_ok = 0, gauge_ok = 0;
  for (int s = 0; s < 20; ++s) {
    SimConfig cfg = quick_cfg(400.0, 1000 + s);
    TrajectoryStats st = simulate(spec, u, cfg);
    Estimate w = winding_rate(st, 0);
    if (std::abs(w.mean - c / kTwoPi) <= 3.0 * w.stderr_) ++wind_ok;
    if (std::abs(st.cost_gauge.mean - c / kTwoPi) <= 3.0 * st.cost_gauge.stderr_) ++gauge_ok;
  }
  CHECK(wind_ok >= 19);
  CHECK(gauge_ok >= 19);
}

TEST_CASE("interpolation is periodic and exact at nodes") {
  auto g = flat_circle(32);
  ScalarField f(32);
  for (int i = 0; i < 32; ++i) f[i] = std::sin(g->grid.theta1[i]);
  CHECK(interpolate_scalar(*g, f, g->grid.theta1[5]) == doctest::Approx(f[5]).epsilon(1e-14));
  CHECK(interpolate_scalar(*g, f, kTwoPi) == doctest::Approx(f[0]).epsilon(1e-12));
  const double mid = 0.5 * (f[3] + f[4]);
  CHECK(interpolate_scalar(*g, f, 3.5 * g->grid.h1) == doctest::Approx(mid).epsilon(1e-12));
}

TEST_CASE("time step warning and blow-up detection") {
  auto g = flat_circle(64);
  ProblemSpec spec = base_spec(g);
  spec.f = const_form(*g, 200.0);
  OneForm u(1, 64);
  SimConfig cfg = quick_cfg(150.0, 2);
  TrajectoryStats st = simulate(spec, u, cfg);
  CHECK(!st.warnings.empty());

  spec.f = const_form(*g, 1e160);  // drift overflow -> non-finite increments
  SimConfig tiny = quick_cfg(0.2, 2);
  tiny.dt = 1e-3;
  CHECK_THROWS_AS(simulate(spec, u, tiny), SimulationError);
}
