#pragma once

#include <string>
#include <vector>

#include "ergo/geometry.hpp"

namespace ergo {

/// Sparse generator (1/2) Lap + <b, d .> acting on scalar fields.
/// Annihilates constants; off-diagonal pattern is the difference stencil.
struct GeneratorMatrix {
  SpMat L;
  const Geometry* geom = nullptr;
  OneForm drift;  // the covariant b used in assembly
  std::vector<std::string> warnings;
};

GeneratorMatrix assemble_generator(const Geometry& geom, const OneForm& b);

/// Formal adjoint with respect to inner0: L* = M0^{-1} L^T M0, so that
/// inner0(L phi, psi) = inner0(phi, L* psi) exactly.
GeneratorMatrix assemble_adjoint(const GeneratorMatrix& gen);

/// The two distinct potentials the theory uses, kept apart by a tag so a
/// solver cannot consume the wrong one.
enum class PotentialVariant { GaugeW, YermakovW };

struct PotentialField {
  ScalarField W;
  PotentialVariant variant = PotentialVariant::GaugeW;
};

/// W = lambda V + lambda <f,A> - (lambda^2/2)|A|^2 - (lambda/2) delta A.
PotentialField assemble_gauge_W(const Geometry& geom, double lambda, const ScalarField& V,
                                const OneForm& f, const OneForm& A);

/// W = lambda V + (1/2)|f|^2 - (1/2) delta f.
PotentialField assemble_yermakov_W(const Geometry& geom, double lambda, const ScalarField& V,
                                   const OneForm& f);

/// Equivalent problem with the gauge field absorbed:
///   f_tilde = f - lambda A
///   V_tilde = V + <f,A> - (lambda/2)|A|^2 - (1/2) delta A
/// The optimal control of the reduced problem maps back by u = u_tilde - lambda A.
struct ReducedProblem {
  OneForm f_tilde;
  ScalarField V_tilde;
};

ReducedProblem gauge_reduce(const Geometry& geom, double lambda, const ScalarField& V,
                            const OneForm& f, const OneForm& A);

}  // namespace ergo
