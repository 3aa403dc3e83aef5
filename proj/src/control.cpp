#include "ergo/control.hpp"

#include <cmath>

namespace ergo {

namespace {
void require_positive(const ScalarField& rho) {
  for (Eigen::Index i = 0; i < rho.size(); ++i)
    if (!(rho[i] > 0)) throw ConfigError("density must be positive (node " + std::to_string(i) + ")");
}
}  // namespace

OneForm control_from_density_current(const Geometry& geom, const ScalarField& rho,
                                     const OneForm& J, const OneForm& f) {
  require_positive(rho);
  OneForm drho = geom.d0(rho);
  OneForm u(geom.dim(), geom.size());
  for (int k = 0; k < geom.dim(); ++k)
    u.comp(k) = (J.comp(k) + 0.5 * drho.comp(k)).cwiseQuotient(rho) - f.comp(k);
  return u;
}

OneForm current_from_density_control(const Geometry& geom, const ScalarField& rho,
                                     const OneForm& u, const OneForm& f) {
  OneForm drho = geom.d0(rho);
  OneForm J(geom.dim(), geom.size());
  for (int k = 0; k < geom.dim(); ++k)
    J.comp(k) = -0.5 * drho.comp(k) + rho.cwiseProduct(f.comp(k) + u.comp(k));
  return J;
}

CostBreakdown cost_rho_u(const Geometry& geom, const ScalarField& rho, const OneForm& u,
                         double lambda, const ScalarField& V, const OneForm& f, const OneForm& A) {
  require_positive(rho);
  CostBreakdown c;
  c.state = geom.quad(V.cwiseProduct(rho));
  c.control = geom.quad(geom.pointwise_norm2(u).cwiseProduct(rho)) / (2.0 * lambda);
  // <A, f+u> - (1/2) delta A against rho; equals int <A, J> by the discrete
  // adjoint identity.
  ScalarField pair = geom.pointwise_dot(A, f + u);
  c.gauge = geom.quad(pair.cwiseProduct(rho)) - 0.5 * geom.quad(geom.codifferential(A).cwiseProduct(rho));
  c.total = c.state + c.control + c.gauge;
  return c;
}

CostBreakdown cost_rho_J(const Geometry& geom, const ScalarField& rho, const OneForm& J,
                         double lambda, const ScalarField& V, const OneForm& f, const OneForm& A) {
  require_positive(rho);
  OneForm u = control_from_density_current(geom, rho, J, f);
  CostBreakdown c;
  c.state = geom.quad(V.cwiseProduct(rho));
  c.control = geom.quad(geom.pointwise_norm2(u).cwiseProduct(rho)) / (2.0 * lambda);
  c.gauge = geom.inner1(A, J);
  c.total = c.state + c.control + c.gauge;
  return c;
}

double flux(const Geometry& geom, const OneForm& A, const OneForm& J) { return geom.inner1(A, J); }

double hjb_residual(const Geometry& geom, const ScalarField& psi, double mu, const SpMat& H,
                    const ScalarField& W) {
  ScalarField r = H * psi - W.cwiseProduct(psi) - mu * psi;
  return geom.norm0(r) / geom.norm0(psi);
}

}  // namespace ergo
