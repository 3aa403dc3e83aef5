#include "ergo/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

namespace ergo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Weight of the symmetric fourth-difference term in the discrete derivative,
// relative to 1/h. Any positive value removes the odd-even null mode; 1/12
// keeps it comparable in size to the resolved part of the spectrum.
constexpr double kFourthDiff = 1.0 / 12.0;

// Periodic one-axis derivative stencil as a sparse matrix on the full grid.
// axis = 0 differentiates along i1, axis = 1 along i2.
SpMat axis_derivative(const Grid& g, int axis) {
  const Eigen::Index N = g.size();
  const int n = axis == 0 ? g.n1 : g.n2;
  const double h = axis == 0 ? g.h1 : g.h2;
  const double c = kFourthDiff / h;
  const double offsets[5] = {-2, -1, 0, 1, 2};
  const double coefs[5] = {c, -1.0 / (2 * h) - 4 * c, 6 * c, 1.0 / (2 * h) - 4 * c, c};

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(5 * N);
  for (int i2 = 0; i2 < g.n2; ++i2) {
    for (int i1 = 0; i1 < g.n1; ++i1) {
      const Eigen::Index row = g.index(i1, i2);
      for (int s = 0; s < 5; ++s) {
        int o = static_cast<int>(offsets[s]);
        int j1 = i1, j2 = i2;
        if (axis == 0)
          j1 = ((i1 + o) % n + n) % n;
        else
          j2 = ((i2 + o) % n + n) % n;
        trips.emplace_back(row, g.index(j1, j2), coefs[s]);
      }
    }
  }
  SpMat D(N, N);
  D.setFromTriplets(trips.begin(), trips.end());
  return D;
}

void validate_spd(const Grid& grid, const MetricSamples& s) {
  const Eigen::Index N = grid.size();
  if (s.g11.size() != N)
    throw ConfigError("metric samples g11 size does not match grid");
  if (grid.dim() == 2 && (s.g12.size() != N || s.g22.size() != N))
    throw ConfigError("metric samples g12/g22 size does not match grid");
  for (Eigen::Index i = 0; i < N; ++i) {
    if (grid.dim() == 1) {
      if (!(s.g11[i] > 0))
        throw ConfigError("metric not positive definite at node " + std::to_string(i));
    } else {
      const double det = s.g11[i] * s.g22[i] - s.g12[i] * s.g12[i];
      if (!(s.g11[i] > 0) || !(det > 0))
        throw ConfigError("metric not positive definite at node " + std::to_string(i));
    }
  }
}

}  // namespace

OneForm Geometry::d0(const ScalarField& f) const {
  OneForm w(dim(), size());
  w.data = D * f;
  return w;
}

ScalarField Geometry::codifferential(const OneForm& w) const { return delta * w.data; }

ScalarField Geometry::laplace_beltrami(const ScalarField& f) const { return lap * f; }

double Geometry::inner0(const ScalarField& a, const ScalarField& b) const {
  return (a.array() * b.array() * w0.array()).sum();
}

double Geometry::inner1(const OneForm& a, const OneForm& b) const {
  return a.data.dot(M1 * b.data);
}

double Geometry::quad(const ScalarField& f) const { return (f.array() * w0.array()).sum(); }

double Geometry::norm0(const ScalarField& a) const { return std::sqrt(std::max(0.0, inner0(a, a))); }

double Geometry::norm1(const OneForm& a) const { return std::sqrt(std::max(0.0, inner1(a, a))); }

OneForm Geometry::raise_index(const OneForm& w) const {
  OneForm v(dim(), size());
  if (dim() == 1) {
    v.comp(0) = metric.inv11.cwiseProduct(w.comp(0));
  } else {
    v.comp(0) = metric.inv11.cwiseProduct(w.comp(0)) + metric.inv12.cwiseProduct(w.comp(1));
    v.comp(1) = metric.inv12.cwiseProduct(w.comp(0)) + metric.inv22.cwiseProduct(w.comp(1));
  }
  return v;
}

OneForm Geometry::lower_index(const OneForm& v) const {
  OneForm w(dim(), size());
  if (dim() == 1) {
    w.comp(0) = metric.g11.cwiseProduct(v.comp(0));
  } else {
    w.comp(0) = metric.g11.cwiseProduct(v.comp(0)) + metric.g12.cwiseProduct(v.comp(1));
    w.comp(1) = metric.g12.cwiseProduct(v.comp(0)) + metric.g22.cwiseProduct(v.comp(1));
  }
  return w;
}

ScalarField Geometry::pointwise_dot(const OneForm& a, const OneForm& b) const {
  if (dim() == 1) return metric.inv11.cwiseProduct(a.comp(0).cwiseProduct(b.comp(0)));
  ScalarField r = metric.inv11.cwiseProduct(a.comp(0).cwiseProduct(b.comp(0)));
  r += metric.inv22.cwiseProduct(a.comp(1).cwiseProduct(b.comp(1)));
  r += metric.inv12.cwiseProduct(a.comp(0).cwiseProduct(b.comp(1)) + a.comp(1).cwiseProduct(b.comp(0)));
  return r;
}

ScalarField Geometry::pointwise_norm2(const OneForm& a) const { return pointwise_dot(a, a); }

Geometry build_geometry(ManifoldKind kind, int n1, int n2, const MetricSamples& samples) {
  if (n1 < 8 || (kind == ManifoldKind::Torus && n2 < 8))
    throw ConfigError("grid sizes must be at least 8 per axis");
  if (kind == ManifoldKind::Circle && n2 != 1)
    throw ConfigError("circle grid takes a single size");

  Geometry geo;
  Grid& g = geo.grid;
  g.kind = kind;
  g.n1 = n1;
  g.n2 = kind == ManifoldKind::Circle ? 1 : n2;
  g.h1 = kTwoPi / n1;
  g.h2 = kind == ManifoldKind::Circle ? 0.0 : kTwoPi / n2;
  g.theta1 = Eigen::VectorXd::LinSpaced(n1, 0.0, (n1 - 1) * g.h1);
  if (kind == ManifoldKind::Circle)
    g.theta2 = Eigen::VectorXd::Zero(1);
  else
    g.theta2 = Eigen::VectorXd::LinSpaced(g.n2, 0.0, (g.n2 - 1) * g.h2);

  validate_spd(g, samples);
  const Eigen::Index N = g.size();
  const int m = g.dim();
  const double volh = m == 1 ? g.h1 : g.h1 * g.h2;

  Metric& mt = geo.metric;
  mt.g11 = samples.g11;
  if (m == 2) {
    mt.g12 = samples.g12;
    mt.g22 = samples.g22;
    Eigen::VectorXd det = mt.g11.cwiseProduct(mt.g22) - mt.g12.cwiseProduct(mt.g12);
    mt.sqrtg = det.cwiseSqrt();
    mt.inv11 = mt.g22.cwiseQuotient(det);
    mt.inv22 = mt.g11.cwiseQuotient(det);
    mt.inv12 = -mt.g12.cwiseQuotient(det);
  } else {
    mt.sqrtg = mt.g11.cwiseSqrt();
    mt.inv11 = mt.g11.cwiseInverse();
  }

  // Discrete derivative, stacked per axis.
  SpMat D1 = axis_derivative(g, 0);
  SpMat D2;
  if (m == 2) D2 = axis_derivative(g, 1);

  geo.w0 = mt.sqrtg * volh;
  {
    std::vector<Eigen::Triplet<double>> td;
    td.reserve((m == 1 ? 5 : 10) * N);
    geo.D.resize(m * N, N);
    for (int k = 0; k < D1.outerSize(); ++k)
      for (SpMat::InnerIterator it(D1, k); it; ++it) td.emplace_back(it.row(), it.col(), it.value());
    if (m == 2)
      for (int k = 0; k < D2.outerSize(); ++k)
        for (SpMat::InnerIterator it(D2, k); it; ++it)
          td.emplace_back(N + it.row(), it.col(), it.value());
    geo.D.setFromTriplets(td.begin(), td.end());
  }

  {
    std::vector<Eigen::Triplet<double>> tm;
    tm.reserve(m * m * N);
    geo.M1.resize(m * N, m * N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const double w = geo.w0[i];
      tm.emplace_back(i, i, mt.inv11[i] * w);
      if (m == 2) {
        tm.emplace_back(N + i, N + i, mt.inv22[i] * w);
        tm.emplace_back(i, N + i, mt.inv12[i] * w);
        tm.emplace_back(N + i, i, mt.inv12[i] * w);
      }
    }
    geo.M1.setFromTriplets(tm.begin(), tm.end());
  }

  SpMat M0inv(N, N);
  {
    std::vector<Eigen::Triplet<double>> t0;
    t0.reserve(N);
    for (Eigen::Index i = 0; i < N; ++i) t0.emplace_back(i, i, 1.0 / geo.w0[i]);
    M0inv.setFromTriplets(t0.begin(), t0.end());
  }
  geo.delta = (M0inv * SpMat(geo.D.transpose()) * geo.M1).pruned();
  geo.lap = (-(geo.delta * geo.D)).pruned();

  // Christoffel symbols from derivatives of the sampled metric.
  if (m == 1) {
    Eigen::VectorXd dg = D1 * mt.g11;
    mt.gamma1_11 = 0.5 * mt.inv11.cwiseProduct(dg);
    mt.s11 = mt.inv11.cwiseSqrt();
  } else {
    Eigen::VectorXd d1g11 = D1 * mt.g11, d1g12 = D1 * mt.g12, d1g22 = D1 * mt.g22;
    Eigen::VectorXd d2g11 = D2 * mt.g11, d2g12 = D2 * mt.g12, d2g22 = D2 * mt.g22;
    auto christoffel = [&](const Eigen::VectorXd& c1, const Eigen::VectorXd& c2,
                           Eigen::VectorXd& up1, Eigen::VectorXd& up2) {
      up1 = 0.5 * (mt.inv11.cwiseProduct(c1) + mt.inv12.cwiseProduct(c2));
      up2 = 0.5 * (mt.inv12.cwiseProduct(c1) + mt.inv22.cwiseProduct(c2));
    };
    christoffel(d1g11, 2 * d1g12 - d2g11, mt.gamma1_11, mt.gamma2_11);
    christoffel(d2g11, d1g22, mt.gamma1_12, mt.gamma2_12);
    christoffel(2 * d2g12 - d1g22, d2g22, mt.gamma1_22, mt.gamma2_22);
    // SPD square root of the 2x2 contravariant metric.
    mt.s11.resize(N);
    mt.s12.resize(N);
    mt.s22.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) {
      const double a = mt.inv11[i], b = mt.inv12[i], c = mt.inv22[i];
      const double s = std::sqrt(a * c - b * b);
      const double t = std::sqrt(a + c + 2 * s);
      mt.s11[i] = (a + s) / t;
      mt.s12[i] = b / t;
      mt.s22[i] = (c + s) / t;
    }
  }
  return geo;
}

Geometry build_flat_geometry(ManifoldKind kind, int n1, int n2) {
  const Eigen::Index N = static_cast<Eigen::Index>(n1) * (kind == ManifoldKind::Circle ? 1 : n2);
  MetricSamples s;
  s.g11 = Eigen::VectorXd::Ones(N);
  if (kind == ManifoldKind::Torus) {
    s.g12 = Eigen::VectorXd::Zero(N);
    s.g22 = Eigen::VectorXd::Ones(N);
  }
  return build_geometry(kind, n1, n2, s);
}

}  // namespace ergo
