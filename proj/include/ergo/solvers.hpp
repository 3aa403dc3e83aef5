#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "ergo/control.hpp"
#include "ergo/operators.hpp"

namespace ergo {

struct Tolerances {
  double lin_tol = 1e-10;     // linear/eigen residuals, relative
  double newton_tol = 1e-9;   // Yermakov residual norm
  int eig_max_iter = 200;
  int newton_max_iter = 50;
  int cg_max_iter = 20000;
};

enum class ProblemVariant { Unconstrained, FixedDensity, FixedCurrent, Symmetrizable };

struct ProblemSpec {
  std::shared_ptr<const Geometry> geom;
  double lambda = 1.0;
  ScalarField V;
  OneForm f;
  OneForm A;
  ProblemVariant variant = ProblemVariant::Unconstrained;
  ScalarField rho_target;  // fixed-density payload
  OneForm J_target;        // fixed-current payload
  Tolerances tol;
};

enum class PotentialKind { Psi, Phi, SqrtDensity };

struct Residuals {
  double pde = 0.0;            // eigen / PDE / Newton residual, as applicable
  double delta_J = 0.0;        // |delta J|_0
  double fokker_planck = 0.0;  // |L_u* rho|_0 relative to the operator scale
  double triple = 0.0;         // consistency of (rho, J, u) through the algebra
  double curl = 0.0;           // |curl(f+u)| for symmetrizable solves
  int eig_iterations = 0;
  int newton_iterations = 0;
  int linear_iterations = 0;
};

struct SolveResult {
  ScalarField rho;
  OneForm J;
  OneForm u;
  ScalarField potential;
  PotentialKind potential_kind = PotentialKind::Psi;
  std::optional<double> mu;
  CostBreakdown cost;
  /// Fixed-current only: the cost reconstructed from the multiplier,
  /// -mu - (1/lambda) int <f,J> + (1/lambda) int |J|^2 / rho.
  std::optional<double> value_identity_cost;
  Residuals residuals;
  std::vector<std::string> warnings;
};

struct EigenPair {
  double value = 0.0;
  ScalarField vec;
  double residual = 0.0;
  int iterations = 0;
  bool dense_fallback = false;
};

/// Combine generator and tagged potential into H - diag(W), checking the tag.
SpMat hjb_operator(const GeneratorMatrix& H, const PotentialField& W, PotentialVariant expected);

/// Eigenvalue of maximal real part with positive eigenvector, by shifted
/// inverse power iteration (shift above the Gershgorin bound, tightened as
/// the estimate settles). Falls back to a dense solve for N <= 4096.
/// The eigenvector is normalized against rho0 when given
/// (int psi^2 rho0 dx = 1), otherwise sup-normalized.
EigenPair principal_eigenpair(const Geometry& geom, const SpMat& T, const Tolerances& tol,
                              const ScalarField* rho0 = nullptr);

/// Dense principal eigenpair (oracle path; also the iterative fallback).
EigenPair principal_eigenpair_dense(const Geometry& geom, const SpMat& T);

/// Positive, unit-mass kernel vector of the adjoint generator, by inverse
/// iteration targeting the zero eigenvalue. Errors if the kernel is not
/// one-dimensional or the vector is sign-indefinite.
ScalarField stationary_density(const GeneratorMatrix& Lstar, const Tolerances& tol,
                               int* iterations = nullptr);

SolveResult solve_unconstrained(const ProblemSpec& spec);
SolveResult solve_fixed_density(const ProblemSpec& spec);
SolveResult solve_fixed_current(const ProblemSpec& spec);
SolveResult solve_symmetrizable(const ProblemSpec& spec);

/// Dispatch on spec.variant.
SolveResult solve(const ProblemSpec& spec);

/// Closed-form periodic solution of phi'' + (ln rho)' phi' = k (ln rho)' on
/// the circle by trapezoid quadrature, pinned to phi(0) = 0.
ScalarField circle_fixed_density_closed_form(const Geometry& geom, const ScalarField& rho,
                                             double k);

/// Split a circle one-form beta = -dU/2 + (k/2) dtheta into (U, k);
/// U is pinned to U(0) = 0.
struct CircleDecomposition {
  ScalarField U;
  double k = 0.0;
};
CircleDecomposition decompose_circle_one_form(const Geometry& geom, const OneForm& beta);

/// Harmonic representative paired with a 0-cycle on the circle
/// (weighted points). Works for any circle metric.
struct CyclePoint {
  double theta = 0.0;
  double weight = 1.0;
};
OneForm harmonic_gauge(const Geometry& geom, const std::vector<CyclePoint>& cycle);

/// Harmonic representative of the homology class (p, q) on the flat torus.
/// Refuses non-constant metrics.
OneForm harmonic_gauge(const Geometry& geom, int p, int q);

/// Predicted solution for A -> A + d phi without re-solving: rho, u, J are
/// unchanged and psi picks up the factor exp(lambda phi).
SolveResult gauge_transform(const SolveResult& result, const ScalarField& phi, double lambda);

}  // namespace ergo
