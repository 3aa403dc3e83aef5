#include "ergo/operators.hpp"

#include <cmath>

namespace ergo {

GeneratorMatrix assemble_generator(const Geometry& geom, const OneForm& b) {
  const Eigen::Index N = geom.size();
  const int m = geom.dim();
  if (b.data.size() != m * N) throw ConfigError("drift one-form does not match grid");
  if (!b.data.allFinite()) throw ConfigError("drift one-form has non-finite entries");

  GeneratorMatrix gen;
  gen.geom = &geom;
  gen.drift = b;

  // Pairing matrix P: (P w)_n = g^{ij} b_i w_j at node n, so P * D is the
  // advective part <b, d phi>.
  OneForm bsharp = geom.raise_index(b);
  SpMat P(N, m * N);
  {
    std::vector<Eigen::Triplet<double>> tp;
    tp.reserve(m * N);
    for (int k = 0; k < m; ++k)
      for (Eigen::Index i = 0; i < N; ++i) tp.emplace_back(i, k * N + i, bsharp.comp(k)[i]);
    P.setFromTriplets(tp.begin(), tp.end());
  }
  gen.L = (0.5 * geom.lap + P * geom.D).pruned();

  // Cell-Peclet check: strong drift on a coarse grid can destroy positivity
  // of the discrete stationary density.
  const double hmax = m == 1 ? geom.grid.h1 : std::max(geom.grid.h1, geom.grid.h2);
  const double bmax = std::sqrt(geom.pointwise_norm2(b).maxCoeff());
  if (hmax * bmax >= 2.0)
    gen.warnings.push_back("cell Peclet number h*|b| = " + std::to_string(hmax * bmax) +
                           " >= 2; consider refining the grid");
  return gen;
}

GeneratorMatrix assemble_adjoint(const GeneratorMatrix& gen) {
  const Geometry& geom = *gen.geom;
  const Eigen::Index N = geom.size();
  GeneratorMatrix adj;
  adj.geom = gen.geom;
  adj.drift = gen.drift;
  adj.warnings = gen.warnings;
  SpMat Lt = SpMat(gen.L.transpose());
  // Row/column scaling by the quadrature weights.
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(Lt.nonZeros());
  for (int k = 0; k < Lt.outerSize(); ++k)
    for (SpMat::InnerIterator it(Lt, k); it; ++it)
      t.emplace_back(it.row(), it.col(), it.value() * geom.w0[it.col()] / geom.w0[it.row()]);
  adj.L.resize(N, N);
  adj.L.setFromTriplets(t.begin(), t.end());
  return adj;
}

PotentialField assemble_gauge_W(const Geometry& geom, double lambda, const ScalarField& V,
                                const OneForm& f, const OneForm& A) {
  if (lambda <= 0) throw ConfigError("lambda must be positive");
  PotentialField p;
  p.variant = PotentialVariant::GaugeW;
  p.W = lambda * V + lambda * geom.pointwise_dot(f, A) -
        0.5 * lambda * lambda * geom.pointwise_norm2(A) - 0.5 * lambda * geom.codifferential(A);
  return p;
}

PotentialField assemble_yermakov_W(const Geometry& geom, double lambda, const ScalarField& V,
                                   const OneForm& f) {
  if (lambda <= 0) throw ConfigError("lambda must be positive");
  PotentialField p;
  p.variant = PotentialVariant::YermakovW;
  p.W = lambda * V + 0.5 * geom.pointwise_norm2(f) - 0.5 * geom.codifferential(f);
  return p;
}

ReducedProblem gauge_reduce(const Geometry& geom, double lambda, const ScalarField& V,
                            const OneForm& f, const OneForm& A) {
  if (lambda <= 0) throw ConfigError("lambda must be positive");
  ReducedProblem r;
  r.f_tilde = f - lambda * A;
  // The cross term <f,A> is part of the reduced potential: substituting
  // u = u_tilde - lambda A into the cost leaves V + <f,A> - (lambda/2)|A|^2
  // - (1/2) delta A paired with rho.
  r.V_tilde = V + geom.pointwise_dot(f, A) - 0.5 * lambda * geom.pointwise_norm2(A) -
              0.5 * geom.codifferential(A);
  return r;
}

}  // namespace ergo
