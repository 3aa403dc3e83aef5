#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <vector>

#include "ergo/fields.hpp"

namespace ergo {

using SpMat = Eigen::SparseMatrix<double>;

enum class ManifoldKind { Circle, Torus };

/// Uniform periodic grid on S^1 (angles in [0,2pi)) or the 2-torus.
/// Node ordering on the torus is row-major with axis 1 fastest:
/// idx = i2 * n1 + i1.
struct Grid {
  ManifoldKind kind = ManifoldKind::Circle;
  int n1 = 0;
  int n2 = 1;  // 1 for the circle
  double h1 = 0.0;
  double h2 = 0.0;
  Eigen::VectorXd theta1;  // per-axis node angles, strictly increasing
  Eigen::VectorXd theta2;

  int dim() const { return kind == ManifoldKind::Circle ? 1 : 2; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(n1) * n2; }
  Eigen::Index index(int i1, int i2 = 0) const { return static_cast<Eigen::Index>(i2) * n1 + i1; }
  double coord1(Eigen::Index node) const { return theta1[node % n1]; }
  double coord2(Eigen::Index node) const { return theta2[node / n1]; }
};

/// Per-node metric samples g_{ij}; for the circle only g11 is used.
struct MetricSamples {
  Eigen::VectorXd g11;
  Eigen::VectorXd g12;
  Eigen::VectorXd g22;
};

/// Metric with the derived quantities every solver and the simulator need:
/// inverse, volume density, Christoffel symbols and the SPD square root of
/// the contravariant metric (the diffusion factor).
struct Metric {
  Eigen::VectorXd g11, g12, g22;          // covariant components
  Eigen::VectorXd inv11, inv12, inv22;    // contravariant components
  Eigen::VectorXd sqrtg;                  // sqrt(det g) > 0
  // Christoffel symbols Gamma^k_{ij}, symmetric in (i,j).
  // Circle: only gamma1_11. Torus: six independent entries.
  Eigen::VectorXd gamma1_11, gamma1_12, gamma1_22;
  Eigen::VectorXd gamma2_11, gamma2_12, gamma2_22;
  // SPD square root S of g^{ij} (S S^T = g^{-1}), per node.
  Eigen::VectorXd s11, s12, s22;
};

/// Grid + metric + the discrete differential operators built from them.
///
/// The discrete derivative D applies, per axis, a centered second-order
/// difference plus a small symmetric fourth-difference term (coefficient
/// h^2/12 relative to the centered stencil). The extra term is O(h^3),
/// so all operators stay second-order accurate, and it removes the
/// odd-even null mode the pure centered stencil has on even-sized
/// periodic grids; without it the kernel of the Laplacian is not just
/// the constants.
///
/// The codifferential is the exact adjoint of D with respect to the
/// discrete inner products, so integration-by-parts identities hold to
/// machine precision.
class Geometry {
public:
  Grid grid;
  Metric metric;

  SpMat D;       // (m*N) x N stacked per-axis derivative
  SpMat M1;      // (m*N) x (m*N) 1-form mass matrix, g^{ij} sqrtg h1 h2 blocks
  Eigen::VectorXd w0;  // diagonal of the 0-form mass matrix, sqrtg h1 h2
  SpMat delta;   // N x (m*N) codifferential, M0^{-1} D^T M1
  SpMat lap;     // N x N Laplace-Beltrami, -delta * D

  int dim() const { return grid.dim(); }
  Eigen::Index size() const { return grid.size(); }

  OneForm d0(const ScalarField& f) const;
  ScalarField codifferential(const OneForm& w) const;
  ScalarField laplace_beltrami(const ScalarField& f) const;

  double inner0(const ScalarField& a, const ScalarField& b) const;
  double inner1(const OneForm& a, const OneForm& b) const;
  /// Quadrature of a scalar field, inner0(f, 1).
  double quad(const ScalarField& f) const;
  double norm0(const ScalarField& a) const;
  double norm1(const OneForm& a) const;

  /// Raise/lower the index with the node metric. raise returns contravariant
  /// components in the same stacked layout.
  OneForm raise_index(const OneForm& w) const;
  OneForm lower_index(const OneForm& v) const;

  /// Pointwise metric pairing <a,b>_g = g^{ij} a_i b_j per node.
  ScalarField pointwise_dot(const OneForm& a, const OneForm& b) const;
  /// Pointwise |a|_g^2 per node.
  ScalarField pointwise_norm2(const OneForm& a) const;
};

/// Build a geometry from per-node metric samples. Rejects sizes < 8 and
/// samples that are not symmetric positive definite (reporting the node).
Geometry build_geometry(ManifoldKind kind, int n1, int n2, const MetricSamples& samples);

/// Convenience: flat metric (g = identity).
Geometry build_flat_geometry(ManifoldKind kind, int n1, int n2 = 1);

}  // namespace ergo
