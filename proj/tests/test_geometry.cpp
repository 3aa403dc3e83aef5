#include <doctest.h>

#include <Eigen/Dense>
#include <numbers>
#include <random>

#include "ergo/geometry.hpp"

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

OneForm random_one_form(const Geometry& g, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  OneForm w(g.dim(), g.size());
  for (Eigen::Index i = 0; i < w.data.size(); ++i) w.data[i] = nd(rng);
  return w;
}

Geometry curved_circle(int n, double c0 = 2.0, double a = 1.0) {
  MetricSamples s;
  s.g11.resize(n);
  const double h = 2 * kPi / n;
  for (int i = 0; i < n; ++i) {
    const double v = c0 + a * std::cos(i * h);
    s.g11[i] = v * v;
  }
  return build_geometry(ManifoldKind::Circle, n, 1, s);
}

Geometry curved_torus(int n1, int n2) {
  const Eigen::Index N = static_cast<Eigen::Index>(n1) * n2;
  MetricSamples s;
  s.g11.resize(N);
  s.g12.resize(N);
  s.g22.resize(N);
  const double h1 = 2 * kPi / n1, h2 = 2 * kPi / n2;
  for (int j = 0; j < n2; ++j)
    for (int i = 0; i < n1; ++i) {
      const Eigen::Index idx = static_cast<Eigen::Index>(j) * n1 + i;
      const double t1 = i * h1, t2 = j * h2;
      s.g11[idx] = std::pow(1.3 + 0.3 * std::cos(t1), 2);
      s.g22[idx] = std::pow(1.1 + 0.2 * std::sin(t2 + t1), 2);
      s.g12[idx] = 0.15 * std::cos(t1 - t2);
    }
  return build_geometry(ManifoldKind::Torus, n1, n2, s);
}

double max_abs(const Eigen::VectorXd& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("build_geometry validates input") {
  CHECK_THROWS_AS(build_flat_geometry(ManifoldKind::Circle, 4), ConfigError);
  CHECK_THROWS_AS(build_flat_geometry(ManifoldKind::Torus, 32, 4), ConfigError);
  MetricSamples bad;
  bad.g11 = Eigen::VectorXd::Ones(16);
  bad.g11[5] = -1.0;
  try {
    build_geometry(ManifoldKind::Circle, 16, 1, bad);
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("node 5") != std::string::npos);
  }
}

TEST_CASE("flat grids have unit volume weights and no Christoffel symbols") {
  Geometry c = build_flat_geometry(ManifoldKind::Circle, 64);
  CHECK(c.grid.h1 == doctest::Approx(2 * kPi / 64).epsilon(1e-15));
  CHECK(max_abs(c.metric.gamma1_11) < 1e-14);
  CHECK(max_abs(c.metric.sqrtg - Eigen::VectorXd::Ones(64)) == 0.0);

  Geometry t = build_flat_geometry(ManifoldKind::Torus, 32, 32);
  CHECK(max_abs(t.metric.sqrtg - Eigen::VectorXd::Ones(t.size())) == 0.0);
  // coordinates strictly increasing per axis
  for (int i = 1; i < t.grid.n1; ++i) CHECK(t.grid.theta1[i] > t.grid.theta1[i - 1]);
}

TEST_CASE("Christoffel symbols converge to the analytic value on a curved circle") {
  auto gamma_err = [](int n) {
    Geometry g = curved_circle(n);
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
      const double t = g.grid.theta1[i];
      const double exact = -std::sin(t) / (2.0 + std::cos(t));
      err = std::max(err, std::abs(g.metric.gamma1_11[i] - exact));
    }
    return err;
  };
  const double e64 = gamma_err(64), e128 = gamma_err(128);
  CHECK(e64 < 2e-3);
  CHECK(e64 / e128 > 3.5);
}

TEST_CASE("d0: constants, accuracy, linearity") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 128);
  const Eigen::Index n = g.size();

  OneForm dc = g.d0(ScalarField::Constant(n, 3.7));
  CHECK(max_abs(dc.data) < 1e-14);

  ScalarField s(n), cexact(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s[i] = std::sin(g.grid.theta1[i]);
    cexact[i] = std::cos(g.grid.theta1[i]);
  }
  OneForm ds = g.d0(s);
  CHECK(max_abs(ScalarField(ds.comp(0)) - cexact) < 5e-4);

  ScalarField a = random_field(g, 1), b = random_field(g, 2);
  OneForm lin = g.d0(2.5 * a - 1.25 * b);
  OneForm ref = 2.5 * g.d0(a) - 1.25 * g.d0(b);
  CHECK(max_abs(lin.data - ref.data) < 1e-12 * (1 + max_abs(ref.data)));
}

TEST_CASE("inner products: volumes, symmetry, positivity") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 128);
  const Eigen::Index n = g.size();
  ScalarField one = ScalarField::Ones(n);
  CHECK(g.inner0(one, one) == doctest::Approx(2 * kPi).epsilon(1e-14));

  OneForm dtheta(1, n);
  dtheta.comp(0).setOnes();
  CHECK(g.inner1(dtheta, dtheta) == doctest::Approx(2 * kPi).epsilon(1e-14));

  ScalarField a = random_field(g, 3), b = random_field(g, 4);
  CHECK(g.inner0(a, b) == g.inner0(b, a));
  CHECK(g.inner0(a, a) > 0);
}

TEST_CASE("codifferential is the exact adjoint of d0") {
  for (const Geometry& g : {build_flat_geometry(ManifoldKind::Circle, 128), curved_circle(96),
                            build_flat_geometry(ManifoldKind::Torus, 32, 32), curved_torus(24, 16)}) {
    ScalarField phi = random_field(g, 5);
    OneForm w = random_one_form(g, 6);
    const double lhs = g.inner1(g.d0(phi), w);
    const double rhs = g.inner0(phi, g.codifferential(w));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (std::abs(lhs) + std::abs(rhs) + 1));
    CHECK(max_abs(g.codifferential(OneForm(g.dim(), g.size()))) == 0.0);
  }
}

TEST_CASE("codifferential is minus the divergence on the flat circle") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 128);
  OneForm w(1, g.size());
  ScalarField expect(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    w.comp(0)[i] = std::cos(g.grid.theta1[i]);
    expect[i] = std::sin(g.grid.theta1[i]);
  }
  CHECK(max_abs(g.codifferential(w) - expect) < 5e-4);
}

TEST_CASE("Laplace-Beltrami: symmetry, sign, kernel, accuracy") {
  Geometry g = build_flat_geometry(ManifoldKind::Circle, 128);
  const Eigen::Index n = g.size();

  CHECK(max_abs(g.laplace_beltrami(ScalarField::Constant(n, 2.0))) < 1e-12);

  ScalarField s(n);
  for (Eigen::Index i = 0; i < n; ++i) s[i] = std::sin(g.grid.theta1[i]);
  CHECK(max_abs(g.laplace_beltrami(s) + s) < 1.1e-3);

  ScalarField a = random_field(g, 7), b = random_field(g, 8);
  const double sym = std::abs(g.inner0(g.laplace_beltrami(a), b) - g.inner0(a, g.laplace_beltrami(b)));
  CHECK(sym <= 1e-10 * (1 + std::abs(g.inner0(a, g.laplace_beltrami(b)))));
  CHECK(g.inner0(g.laplace_beltrami(a), a) <= 1e-12);
  CHECK(std::abs(g.inner0(g.laplace_beltrami(a), ScalarField::Ones(n))) < 1e-11);
}

TEST_CASE("Laplacian kernel is exactly the constants, including even grids") {
  for (const Geometry& g :
       {build_flat_geometry(ManifoldKind::Circle, 32), build_flat_geometry(ManifoldKind::Torus, 8, 8),
        curved_circle(24)}) {
    const Eigen::Index n = g.size();
    // symmetrize with the quadrature weights and count near-zero eigenvalues
    Eigen::VectorXd sq = g.w0.cwiseSqrt();
    Eigen::MatrixXd L(g.lap);
    Eigen::MatrixXd B = sq.asDiagonal() * L * sq.cwiseInverse().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    int zeros = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(es.eigenvalues()[i]) < 1e-10 * scale) ++zeros;
    CHECK(zeros == 1);
    CHECK(es.eigenvalues().maxCoeff() < 1e-10 * scale);  // negative semidefinite
  }
}

TEST_CASE("second-order convergence of d0, codifferential and Laplacian") {
  auto errors = [](int n) {
    Geometry g = build_flat_geometry(ManifoldKind::Circle, n);
    ScalarField f(n), df(n), lf(n);
    for (int i = 0; i < n; ++i) {
      const double t = g.grid.theta1[i];
      f[i] = std::sin(t) + 0.5 * std::cos(2 * t);
      df[i] = std::cos(t) - std::sin(2 * t);
      lf[i] = -std::sin(t) - 2.0 * std::cos(2 * t);
    }
    OneForm w(1, n);
    w.comp(0) = df;
    const double ed = max_abs(ScalarField(g.d0(f).comp(0)) - df);
    const double edelta = max_abs(g.codifferential(w) - ScalarField(-lf));
    const double elap = max_abs(g.laplace_beltrami(f) - lf);
    return std::array<double, 3>{ed, edelta, elap};
  };
  auto c1 = errors(128), c2 = errors(256);
  for (int k = 0; k < 3; ++k) CHECK(c1[k] / c2[k] > 3.5);
}

TEST_CASE("raise and lower index") {
  Geometry flat = build_flat_geometry(ManifoldKind::Circle, 64);
  OneForm w = random_one_form(flat, 9);
  CHECK(max_abs(flat.raise_index(w).data - w.data) == 0.0);

  Geometry g = curved_circle(64);
  OneForm dtheta(1, g.size());
  dtheta.comp(0).setOnes();
  OneForm up = g.raise_index(dtheta);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double v = 2.0 + std::cos(g.grid.theta1[i]);
    CHECK(up.comp(0)[i] == doctest::Approx(1.0 / (v * v)).epsilon(1e-12));
  }
  OneForm w2 = random_one_form(g, 10);
  CHECK(max_abs(g.lower_index(g.raise_index(w2)).data - w2.data) < 1e-14);

  Geometry t = curved_torus(16, 16);
  OneForm w3 = random_one_form(t, 11);
  CHECK(max_abs(t.lower_index(t.raise_index(w3)).data - w3.data) < 1e-13);
}

TEST_CASE("torus operators are second order on smooth fields") {
  auto lap_err = [](int n) {
    Geometry g = build_flat_geometry(ManifoldKind::Torus, n, n);
    ScalarField f(g.size()), lf(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double t1 = g.grid.coord1(i), t2 = g.grid.coord2(i);
      f[i] = std::sin(t1) * std::cos(t2);
      lf[i] = -2.0 * std::sin(t1) * std::cos(t2);
    }
    return max_abs(g.laplace_beltrami(f) - lf);
  };
  CHECK(lap_err(16) / lap_err(32) > 3.5);
}
