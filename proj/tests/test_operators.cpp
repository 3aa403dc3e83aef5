#include <doctest.h>

#include <Eigen/Dense>
#include <numbers>
#include <random>

#include "ergo/operators.hpp"
#include "ergo/solvers.hpp"

using namespace ergo;

namespace {

constexpr double kPi = std::numbers::pi;

ScalarField random_field(const Geometry& g, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  ScalarField f(g.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = nd(rng);
  return f;
}

// smooth low-harmonic one-form with a deterministic per-seed amplitude
OneForm smooth_one_form(const Geometry& g, unsigned seed, double amp = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const double a1 = ud(rng), a2 = ud(rng), a3 = ud(rng);
  OneForm w(g.dim(), g.size());
  for (int k = 0; k < g.dim(); ++k)
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double t1 = g.grid.coord1(i), t2 = g.grid.coord2(i);
      w.comp(k)[i] =
          amp * (a1 * std::cos(t1 + 0.3 * k) + a2 * std::sin(2 * t1 - t2) + a3 * std::cos(t2));
    }
  return w;
}

OneForm const_form(const Geometry& g, double c) {
  OneForm w(g.dim(), g.size());
  w.comp(0).setConstant(c);
  return w;
}

double max_abs(const Eigen::VectorXd& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("generator with zero drift is half the Laplacian") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 64);
  GeneratorMatrix gen = assemble_generator(g, OneForm(1, g.size()));
  SpMat diff = gen.L - SpMat(0.5 * g.lap);
  CHECK(Eigen::MatrixXd(diff).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("generator action matches the analytic drift-diffusion on sin") {
  const int n = 128;
  Geometry g = build_flat_geometry(ManifoldKind::Circle, n);
  const double c = 0.7;
  GeneratorMatrix gen = assemble_generator(g, const_form(g, c));
  ScalarField s(n), expect(n);
  for (int i = 0; i < n; ++i) {
    const double t = g.grid.theta1[i];
    s[i] = std::sin(t);
    expect[i] = -0.5 * std::sin(t) + c * std::cos(t);
  }
  CHECK(max_abs(ScalarField(gen.L * s) - expect) < 2e-3);
}

TEST_CASE("generators annihilate constants; adjoint duality holds") {
  for (const Geometry& g : {build_flat_geometry(ManifoldKind::Circle, 128),
                            build_flat_geometry(ManifoldKind::Torus, 16, 16)}) {
    GeneratorMatrix gen = assemble_generator(g, smooth_one_form(g, 21));
    ScalarField ones = ScalarField::Ones(g.size());
    CHECK(max_abs(gen.L * ones) < 1e-10);
    GeneratorMatrix adj = assemble_adjoint(gen);
    ScalarField a = random_field(g, 22), b = random_field(g, 23);
    const double lhs = g.inner0(ScalarField(gen.L * a), b);
    const double rhs = g.inner0(a, ScalarField(adj.L * b));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (std::abs(lhs) + std::abs(rhs) + 1));
  }
}

TEST_CASE("adjoint of the driftless generator is itself") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 64);
  GeneratorMatrix gen = assemble_generator(g, OneForm(1, g.size()));
  GeneratorMatrix adj = assemble_adjoint(gen);
  CHECK(Eigen::MatrixXd(SpMat(gen.L - adj.L)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constant drift preserves the uniform density") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 96);
  GeneratorMatrix adj = assemble_adjoint(assemble_generator(g, const_form(g, 1.3)));
  ScalarField rho = ScalarField::Constant(g.size(), 1.0 / (2 * kPi));
  CHECK(max_abs(adj.L * rho) < 1e-12);
}

TEST_CASE("cell-Peclet warning fires on coarse grids with strong drift") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 8);
  GeneratorMatrix gen = assemble_generator(g, const_form(g, 10.0));
  CHECK(!gen.warnings.empty());
  GeneratorMatrix ok = assemble_generator(g, const_form(g, 0.1));
  CHECK(ok.warnings.empty());
}

TEST_CASE("gauge W assembly") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 64);
  const Eigen::Index n = g.size();
  ScalarField V = random_field(g, 31);
  OneForm zero(1, n);

  SUBCASE("A = 0 gives lambda V exactly") {
    PotentialField W = assemble_gauge_W(g, 2.5, V, smooth_one_form(g, 32), zero);
    CHECK(max_abs(W.W - 2.5 * V) < 1e-14);
    CHECK(W.variant == PotentialVariant::GaugeW);
  }
  SUBCASE("constant A on the flat circle gives -a^2/2") {
    const double a = 0.8;
    PotentialField W = assemble_gauge_W(g, 1.0, ScalarField::Zero(n), zero, const_form(g, a));
    CHECK(max_abs(W.W - ScalarField::Constant(n, -a * a / 2)) < 1e-12);
  }
  SUBCASE("f = A collapses to |A|^2/2 - delta A / 2") {
    OneForm A = smooth_one_form(g, 33);
    PotentialField W = assemble_gauge_W(g, 1.0, ScalarField::Zero(n), A, A);
    ScalarField expect = 0.5 * g.pointwise_norm2(A) - 0.5 * g.codifferential(A);
    CHECK(max_abs(W.W - expect) < 1e-13);
  }
}

TEST_CASE("Yermakov W assembly") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 64);
  const Eigen::Index n = g.size();
  SUBCASE("f = 0 gives lambda V") {
    ScalarField V = random_field(g, 41);
    PotentialField W = assemble_yermakov_W(g, 1.7, V, OneForm(1, n));
    CHECK(max_abs(W.W - 1.7 * V) < 1e-14);
    CHECK(W.variant == PotentialVariant::YermakovW);
  }
  SUBCASE("gradient force reduces to |dU|^2/8 + delta(dU)/4") {
    ScalarField U = random_field(g, 42);
    OneForm f = -0.5 * g.d0(U);
    PotentialField W = assemble_yermakov_W(g, 1.0, ScalarField::Zero(n), f);
    ScalarField expect = 0.125 * g.pointwise_norm2(g.d0(U)) + 0.25 * g.codifferential(g.d0(U));
    CHECK(max_abs(W.W - expect) < 1e-12);
  }
  SUBCASE("constant force on the flat circle gives c^2/2") {
    const double c = 0.45;
    PotentialField W = assemble_yermakov_W(g, 1.0, ScalarField::Zero(n), const_form(g, c));
    CHECK(max_abs(W.W - ScalarField::Constant(n, c * c / 2)) < 1e-13);
  }
}

TEST_CASE("gauge reduction") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 64);
  const Eigen::Index n = g.size();
  SUBCASE("A = 0 leaves the problem unchanged") {
    OneForm f = smooth_one_form(g, 51);
    ScalarField V = random_field(g, 52);
    ReducedProblem r = gauge_reduce(g, 1.2, V, f, OneForm(1, n));
    CHECK(max_abs(r.f_tilde.data - f.data) == 0.0);
    CHECK(max_abs(r.V_tilde - V) == 0.0);
  }
  SUBCASE("constant A with no force shifts the potential by -a^2/2") {
    const double a = 0.9;
    ScalarField V = random_field(g, 53);
    ReducedProblem r = gauge_reduce(g, 1.0, V, OneForm(1, n), const_form(g, a));
    CHECK(max_abs(r.V_tilde - (V.array() - a * a / 2).matrix()) < 1e-13);
    CHECK(max_abs(ScalarField(r.f_tilde.comp(0)) - ScalarField::Constant(n, -a)) < 1e-14);
  }
  SUBCASE("reduced data reproduces the direct gauge potential") {
    // Assembling gauge-W for the reduced data with A = 0 must equal the
    // direct W; the two solution paths then share the same linear algebra.
    OneForm f = smooth_one_form(g, 54);
    OneForm A = smooth_one_form(g, 55, 0.6);
    ScalarField V = random_field(g, 56);
    const double lam = 1.4;
    ReducedProblem r = gauge_reduce(g, lam, V, f, A);
    PotentialField direct = assemble_gauge_W(g, lam, V, f, A);
    PotentialField reduced = assemble_gauge_W(g, lam, r.V_tilde, r.f_tilde, OneForm(1, n));
    CHECK(max_abs(direct.W - lam * r.V_tilde) < 1e-12);
    CHECK(max_abs(direct.W - reduced.W) < 1e-12);
    CHECK(max_abs((f - lam * A).data - r.f_tilde.data) < 1e-14);
  }
}

TEST_CASE("potential variant mixing is rejected") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 32);
  GeneratorMatrix gen = assemble_generator(g, OneForm(1, g.size()));
  PotentialField W = assemble_yermakov_W(g, 1.0, ScalarField::Zero(g.size()), OneForm(1, g.size()));
  CHECK_THROWS_AS(hjb_operator(gen, W, PotentialVariant::GaugeW), ConfigError);
}
