#pragma once

#include "ergo/geometry.hpp"

namespace ergo {

struct CostBreakdown {
  double state = 0.0;    // int V rho dx
  double control = 0.0;  // int |u|^2 rho / (2 lambda) dx
  double gauge = 0.0;    // int <A, J> dx
  double total = 0.0;
};

/// u = -f + (J + d rho / 2) / rho, pointwise. Throws if rho has a
/// non-positive node.
OneForm control_from_density_current(const Geometry& geom, const ScalarField& rho,
                                     const OneForm& J, const OneForm& f);

/// J = -d rho / 2 + rho (f + u), pointwise.
OneForm current_from_density_control(const Geometry& geom, const ScalarField& rho,
                                     const OneForm& u, const OneForm& f);

CostBreakdown cost_rho_u(const Geometry& geom, const ScalarField& rho, const OneForm& u,
                         double lambda, const ScalarField& V, const OneForm& f, const OneForm& A);

CostBreakdown cost_rho_J(const Geometry& geom, const ScalarField& rho, const OneForm& J,
                         double lambda, const ScalarField& V, const OneForm& f, const OneForm& A);

/// Flux pairing int <A, J> dx. For a harmonic A representing a cross-section
/// this is the long-run signed crossing rate of the trajectory.
double flux(const Geometry& geom, const OneForm& A, const OneForm& J);

/// Relative eigen-equation residual |H psi - W psi - mu psi|_0 / |psi|_0.
double hjb_residual(const Geometry& geom, const ScalarField& psi, double mu, const SpMat& H,
                    const ScalarField& W);

}  // namespace ergo
