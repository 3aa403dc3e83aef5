#include "ergo/solvers.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace ergo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kEps = std::numeric_limits<double>::epsilon();

double operator_scale(const SpMat& T) {
  double s = 1.0;
  for (Eigen::Index i = 0; i < T.rows(); ++i) s = std::max(s, std::abs(T.coeff(i, i)));
  return s;
}

double gershgorin_upper(const SpMat& T) {
  Eigen::VectorXd bound = Eigen::VectorXd::Zero(T.rows());
  for (int k = 0; k < T.outerSize(); ++k)
    for (SpMat::InnerIterator it(T, k); it; ++it)
      bound[it.row()] += it.row() == it.col() ? it.value() : std::abs(it.value());
  return bound.maxCoeff();
}

SpMat identity(Eigen::Index n) {
  SpMat I(n, n);
  I.setIdentity();
  return I;
}

ScalarField log_field(const ScalarField& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!(v[i] > 0)) throw SolverError(std::string(what) + " lost positivity at node " + std::to_string(i));
  return v.array().log();
}

void validate_spec(const ProblemSpec& spec, ProblemVariant expected) {
  if (!spec.geom) throw ConfigError("problem has no geometry");
  if (spec.variant != expected) throw ConfigError("solver called with the wrong problem variant");
  if (!(spec.lambda > 0)) throw ConfigError("lambda must be positive");
  const Geometry& g = *spec.geom;
  if (spec.V.size() != g.size()) throw ConfigError("V does not match grid");
  if (spec.f.data.size() != g.dim() * g.size()) throw ConfigError("f does not match grid");
  if (spec.A.data.size() != g.dim() * g.size()) throw ConfigError("A does not match grid");
}

}  // namespace

SpMat hjb_operator(const GeneratorMatrix& H, const PotentialField& W, PotentialVariant expected) {
  if (W.variant != expected)
    throw ConfigError("potential variant mismatch: the two W definitions are not interchangeable");
  SpMat T = H.L;
  for (Eigen::Index i = 0; i < T.rows(); ++i) T.coeffRef(i, i) -= W.W[i];
  return T;
}

EigenPair principal_eigenpair_dense(const Geometry& geom, const SpMat& T) {
  const Eigen::Index N = T.rows();
  Eigen::MatrixXd Td(T);
  Eigen::EigenSolver<Eigen::MatrixXd> es(Td);
  if (es.info() != Eigen::Success) throw SolverError("dense eigensolver failed");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < N; ++i)
    if (es.eigenvalues()[i].real() > es.eigenvalues()[best].real()) best = i;
  const std::complex<double> lam = es.eigenvalues()[best];
  if (std::abs(lam.imag()) > 1e-8 * (1.0 + std::abs(lam.real())))
    throw SolverError("principal eigenvalue is not real; Perron structure violated");
  EigenPair out;
  out.value = lam.real();
  Eigen::VectorXcd vc = es.eigenvectors().col(best);
  if (vc.imag().norm() > 1e-8 * vc.norm())
    throw SolverError("principal eigenvector is not real; Perron structure violated");
  out.vec = vc.real();
  if (out.vec.sum() < 0) out.vec = -out.vec;
  out.vec /= geom.norm0(out.vec);
  out.residual = geom.norm0(T * out.vec - out.value * out.vec);
  out.dense_fallback = true;
  return out;
}

EigenPair principal_eigenpair(const Geometry& geom, const SpMat& T, const Tolerances& tol,
                              const ScalarField* rho0) {
  const Eigen::Index N = T.rows();
  const double scale = operator_scale(T);
  // The requested tolerance cannot beat the floating-point floor of the
  // residual evaluation itself.
  const double stop = std::max(tol.lin_tol, 20.0 * kEps * scale);

  double shift = gershgorin_upper(T) + 1.0;
  Eigen::SparseLU<SpMat> lu;
  lu.compute(SpMat(shift * identity(N) - T));
  if (lu.info() != Eigen::Success) throw SolverError("eigensolver factorization failed");

  EigenPair out;
  out.vec = ScalarField::Ones(N);
  out.vec /= geom.norm0(out.vec);
  double mu = 0.0;
  double res = std::numeric_limits<double>::infinity();
  int refactors = 0;
  bool converged = false;

  for (int it = 0; it < tol.eig_max_iter; ++it) {
    ScalarField v = lu.solve(out.vec);
    if (!v.allFinite()) break;
    if (v.sum() < 0) v = -v;
    v /= geom.norm0(v);
    ScalarField Tv = T * v;
    mu = geom.inner0(Tv, v);
    res = geom.norm0(Tv - mu * v);
    out.vec = v;
    out.iterations = it + 1;
    if (res <= stop) {
      converged = true;
      break;
    }
    // Move the shift toward the estimate, keeping a residual-sized safety
    // margin above it; far shifts make the power ratio close to one.
    const double delta = std::max({10.0 * res, 1e3 * kEps * scale, 1e-12});
    const double target = mu + delta;
    if (it >= 1 && refactors < 30 && target < shift - 0.1 * delta) {
      shift = target;
      lu.compute(SpMat(shift * identity(N) - T));
      if (lu.info() != Eigen::Success) {
        // shift landed on an eigenvalue; back off and retry once
        shift = mu + 10.0 * delta;
        lu.compute(SpMat(shift * identity(N) - T));
        if (lu.info() != Eigen::Success) break;
      }
      ++refactors;
    }
  }

  if (!converged) {
    if (N <= 4096) {
      out = principal_eigenpair_dense(geom, T);
    } else {
      std::ostringstream msg;
      msg << "principal eigenpair did not converge: residual " << res << " after "
          << out.iterations << " iterations";
      throw SolverError(msg.str());
    }
  } else {
    out.value = mu;
    out.residual = res;
  }

  if (out.vec.minCoeff() <= 0) throw SolverError("Perron structure lost; refine grid");
  if (rho0) {
    const double c = geom.quad(out.vec.cwiseProduct(out.vec).cwiseProduct(*rho0));
    if (!(c > 0)) throw SolverError("eigenvector normalization against rho0 failed");
    out.vec /= std::sqrt(c);
  } else {
    out.vec /= out.vec.maxCoeff();
  }
  return out;
}

ScalarField stationary_density(const GeneratorMatrix& Lstar, const Tolerances& tol,
                               int* iterations) {
  const Geometry& geom = *Lstar.geom;
  const Eigen::Index N = geom.size();
  const SpMat& L = Lstar.L;
  const double scale = operator_scale(L);
  // Inverse iteration targeting the zero eigenvalue; the small positive shift
  // keeps the factorization nonsingular while staying far below the spectral
  // gap of the generator.
  const double sigma = std::max(1e-8, 1e-12 * scale);
  Eigen::SparseLU<SpMat> lu;
  lu.compute(L - sigma * identity(N));
  if (lu.info() != Eigen::Success) throw SolverError("stationary density factorization failed");

  // Residuals are measured relative to the density, not the operator scale,
  // so the eigenvector accuracy does not degrade with refinement; the floor
  // is what finite precision allows for this matrix.
  const double stop = std::max(tol.lin_tol, 100.0 * kEps * scale);
  ScalarField rho = ScalarField::Ones(N);
  rho /= geom.quad(rho);
  double res = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < 40; ++it) {
    ScalarField v = lu.solve(rho);
    if (!v.allFinite()) throw SolverError("stationary density solve produced non-finite values");
    double mass = geom.quad(v);
    if (mass == 0) throw SolverError("stationary density iteration degenerated");
    v /= mass;
    rho = v;
    res = geom.norm0(L * rho) / geom.norm0(rho);
    if (res <= stop) break;
  }
  if (iterations) *iterations = it + 1;
  if (res > stop)
    throw SolverError("stationary density did not converge: relative residual " +
                      std::to_string(res));
  if (rho.minCoeff() <= 0)
    throw SolverError("stationary density is sign-indefinite; refine grid");

  // Kernel dimension probe: a deflated second vector must not behave like a
  // second kernel direction.
  std::mt19937 rng(12345);
  std::normal_distribution<double> nd;
  ScalarField w(N);
  for (Eigen::Index i = 0; i < N; ++i) w[i] = nd(rng);
  const double rho_nsq = geom.inner0(rho, rho);
  for (int s = 0; s < 6; ++s) {
    w = lu.solve(w);
    w -= rho * (geom.inner0(w, rho) / rho_nsq);
    double n = geom.norm0(w);
    if (n == 0) break;
    w /= n;
  }
  const double theta = std::abs(geom.inner0(ScalarField(L * w), w));
  if (theta < std::max(1e3 * kEps * scale, 1e-7))
    throw SolverError("stationary kernel dimension exceeds one; invariant density not unique");
  return rho;
}

// ---------------------------------------------------------------------------
// unconstrained
// ---------------------------------------------------------------------------

SolveResult solve_unconstrained(const ProblemSpec& spec) {
  validate_spec(spec, ProblemVariant::Unconstrained);
  const Geometry& geom = *spec.geom;
  const double lambda = spec.lambda;

  GeneratorMatrix H = assemble_generator(geom, spec.f - lambda * spec.A);
  PotentialField W = assemble_gauge_W(geom, lambda, spec.V, spec.f, spec.A);
  SpMat T = hjb_operator(H, W, PotentialVariant::GaugeW);

  // Uncontrolled density, used only to normalize psi.
  GeneratorMatrix L0 = assemble_generator(geom, spec.f);
  ScalarField rho0 = stationary_density(assemble_adjoint(L0), spec.tol);

  EigenPair ep = principal_eigenpair(geom, T, spec.tol, &rho0);

  SolveResult out;
  out.potential = ep.vec;
  out.potential_kind = PotentialKind::Psi;
  out.mu = ep.value;
  out.u = geom.d0(log_field(ep.vec, "eigenfunction")) - lambda * spec.A;

  GeneratorMatrix Lu = assemble_generator(geom, spec.f + out.u);
  GeneratorMatrix Lustar = assemble_adjoint(Lu);
  int fp_iters = 0;
  out.rho = stationary_density(Lustar, spec.tol, &fp_iters);
  out.J = current_from_density_control(geom, out.rho, out.u, spec.f);
  out.cost = cost_rho_u(geom, out.rho, out.u, lambda, spec.V, spec.f, spec.A);

  out.residuals.pde = hjb_residual(geom, ep.vec, ep.value, H.L, W.W);
  out.residuals.delta_J = geom.norm0(geom.codifferential(out.J));
  out.residuals.fokker_planck =
      geom.norm0(Lustar.L * out.rho) / geom.norm0(out.rho);
  OneForm u_rt = control_from_density_current(geom, out.rho, out.J, spec.f);
  out.residuals.triple = (u_rt.data - out.u.data).cwiseAbs().maxCoeff();
  out.residuals.eig_iterations = ep.iterations;
  out.residuals.linear_iterations = fp_iters;
  out.warnings = H.warnings;
  for (const auto& w : Lu.warnings) out.warnings.push_back(w);
  return out;
}

// ---------------------------------------------------------------------------
// fixed density
// ---------------------------------------------------------------------------

namespace {

// Jacobi-preconditioned CG for the singular consistent SPD system K x = b,
// kernel = constants; iterates are kept mean-free.
ScalarField cg_solve(const SpMat& K, const Eigen::VectorXd& b, double rel_tol, int max_iter,
                     int* iters_out) {
  const Eigen::Index N = K.rows();
  Eigen::VectorXd diag = K.diagonal().cwiseMax(1e-300);
  auto project = [&](Eigen::VectorXd& v) { v.array() -= v.mean(); };

  const double bnorm = b.norm();
  ScalarField x = ScalarField::Zero(N);
  if (bnorm == 0) {
    if (iters_out) *iters_out = 0;
    return x;
  }
  Eigen::VectorXd r = b;
  project(r);
  Eigen::VectorXd z = r.cwiseQuotient(diag);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  int it = 0;
  for (; it < max_iter; ++it) {
    if (r.norm() <= rel_tol * bnorm) break;
    Eigen::VectorXd Kp = K * p;
    const double alpha = rz / p.dot(Kp);
    x += alpha * p;
    r -= alpha * Kp;
    project(r);
    z = r.cwiseQuotient(diag);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (iters_out) *iters_out = it;
  if (r.norm() > rel_tol * bnorm)
    throw SolverError("fixed-density CG did not converge: relative residual " +
                      std::to_string(r.norm() / bnorm));
  project(x);
  return x;
}

SpMat stacked_diag(const Geometry& geom, const ScalarField& rho) {
  const Eigen::Index N = geom.size();
  const int m = geom.dim();
  SpMat R(m * N, m * N);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(m * N);
  for (int k = 0; k < m; ++k)
    for (Eigen::Index i = 0; i < N; ++i) t.emplace_back(k * N + i, k * N + i, rho[i]);
  R.setFromTriplets(t.begin(), t.end());
  return R;
}

}  // namespace

SolveResult solve_fixed_density(const ProblemSpec& spec) {
  validate_spec(spec, ProblemVariant::FixedDensity);
  const Geometry& geom = *spec.geom;
  const double lambda = spec.lambda;
  const ScalarField& rho = spec.rho_target;
  if (rho.size() != geom.size()) throw ConfigError("fixed density does not match grid");
  for (Eigen::Index i = 0; i < rho.size(); ++i)
    if (!(rho[i] > 0)) throw ConfigError("fixed density must be positive everywhere");
  if (std::abs(geom.quad(rho) - 1.0) > 1e-10)
    throw ConfigError("fixed density must integrate to one");

  // delta(rho dPhi) = (1/lambda) ( (1/2) Lap rho + delta(rho (f - lambda A)) )
  OneForm drive = spec.f - lambda * spec.A;
  OneForm rho_drive(geom.dim(), geom.size());
  for (int k = 0; k < geom.dim(); ++k) rho_drive.comp(k) = rho.cwiseProduct(drive.comp(k));
  ScalarField rhs =
      (0.5 * geom.laplace_beltrami(rho) + geom.codifferential(rho_drive)) / lambda;
  const double compat = std::abs(geom.quad(rhs));
  if (compat > 1e-10 * (1.0 + geom.norm0(rhs)))
    throw SolverError("incompatible right-hand side: total integral " + std::to_string(compat));

  SpMat K = (SpMat(geom.D.transpose()) * geom.M1 * stacked_diag(geom, rho) * geom.D).pruned();
  Eigen::VectorXd b = geom.w0.cwiseProduct(rhs);
  int cg_iters = 0;
  ScalarField Phi = cg_solve(K, b, spec.tol.lin_tol, spec.tol.cg_max_iter, &cg_iters);
  // Pin the quadrature mean, not the plain mean.
  Phi.array() -= geom.quad(Phi) / geom.quad(ScalarField::Ones(geom.size()));

  SolveResult out;
  out.rho = rho;
  out.potential = Phi;
  out.potential_kind = PotentialKind::Phi;
  out.u = -lambda * (spec.A + geom.d0(Phi));
  out.J = current_from_density_control(geom, rho, out.u, spec.f);
  out.cost = cost_rho_J(geom, rho, out.J, lambda, spec.V, spec.f, spec.A);

  out.residuals.pde = (K * Phi - b).norm() / std::max(b.norm(), 1e-300);
  out.residuals.delta_J = geom.norm0(geom.codifferential(out.J));
  out.residuals.linear_iterations = cg_iters;
  GeneratorMatrix Lu = assemble_adjoint(assemble_generator(geom, spec.f + out.u));
  out.residuals.fokker_planck =
      geom.norm0(Lu.L * rho) / geom.norm0(rho);
  OneForm u_rt = control_from_density_current(geom, rho, out.J, spec.f);
  out.residuals.triple = (u_rt.data - out.u.data).cwiseAbs().maxCoeff();
  out.warnings = Lu.warnings;
  return out;
}

// ---------------------------------------------------------------------------
// symmetrizable (zero current): time-independent Schroedinger problem
// ---------------------------------------------------------------------------

SolveResult solve_symmetrizable(const ProblemSpec& spec) {
  validate_spec(spec, ProblemVariant::Symmetrizable);
  const Geometry& geom = *spec.geom;
  const double lambda = spec.lambda;

  GeneratorMatrix half_lap = assemble_generator(geom, OneForm(geom.dim(), geom.size()));
  PotentialField W = assemble_yermakov_W(geom, lambda, spec.V, spec.f);
  SpMat T = hjb_operator(half_lap, W, PotentialVariant::YermakovW);

  EigenPair ep = principal_eigenpair(geom, T, spec.tol);
  ScalarField phi = ep.vec;
  const double mass = geom.quad(phi.cwiseProduct(phi));
  phi /= std::sqrt(mass);

  SolveResult out;
  out.potential = phi;
  out.potential_kind = PotentialKind::SqrtDensity;
  out.mu = ep.value / lambda;
  out.rho = phi.cwiseProduct(phi);
  // d(ln phi) makes f + u an exact discrete gradient.
  out.u = geom.d0(log_field(phi, "ground state")) - spec.f;
  out.J = current_from_density_control(geom, out.rho, out.u, spec.f);
  out.cost = cost_rho_u(geom, out.rho, out.u, lambda, spec.V, spec.f, spec.A);
  out.value_identity_cost = -out.mu.value();

  out.residuals.pde = hjb_residual(geom, phi, ep.value, half_lap.L, W.W);
  out.residuals.delta_J = geom.norm0(geom.codifferential(out.J));
  OneForm net = spec.f + out.u;
  if (geom.dim() == 2) {
    const Eigen::Index N = geom.size();
    ScalarField curl =
        geom.D.topRows(N) * ScalarField(net.comp(1)) - geom.D.bottomRows(N) * ScalarField(net.comp(0));
    out.residuals.curl = geom.norm0(curl);
  }
  GeneratorMatrix Lu = assemble_adjoint(assemble_generator(geom, net));
  out.residuals.fokker_planck =
      geom.norm0(Lu.L * out.rho) / geom.norm0(out.rho);
  OneForm u_rt = control_from_density_current(geom, out.rho, out.J, spec.f);
  out.residuals.triple = (u_rt.data - out.u.data).cwiseAbs().maxCoeff();
  out.residuals.eig_iterations = ep.iterations;
  return out;
}

// ---------------------------------------------------------------------------
// fixed current: Yermakov equation by damped Newton with normalization
// ---------------------------------------------------------------------------

namespace {

struct YermakovState {
  ScalarField phi;
  double mu = 0.0;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> history;
};

YermakovState newton_yermakov(const Geometry& geom, const ScalarField& W, double lambda,
                              const ScalarField& q, ScalarField phi, double mu,
                              const Tolerances& tol) {
  const Eigen::Index N = geom.size();
  SpMat base = 0.5 * geom.lap;
  for (Eigen::Index i = 0; i < N; ++i) base.coeffRef(i, i) -= W[i];
  const double scale = operator_scale(base);
  const double stop = std::max(tol.newton_tol, 20.0 * kEps * scale);

  YermakovState st;
  st.phi = std::move(phi);
  st.mu = mu;

  auto residual = [&](const ScalarField& p, double m, ScalarField& G, double& ncon) {
    G = base * p - (lambda * m) * p +
        q.cwiseQuotient(2.0 * p.cwiseProduct(p).cwiseProduct(p));
    ncon = geom.quad(p.cwiseProduct(p)) - 1.0;
    return geom.norm0(G) + std::abs(ncon);
  };

  ScalarField G;
  double ncon = 0.0;
  double res = residual(st.phi, st.mu, G, ncon);
  st.history.push_back(res);

  for (int it = 0; it < tol.newton_max_iter; ++it) {
    if (res <= stop) {
      st.residual = res;
      st.iterations = it;
      return st;
    }
    // Bordered Jacobian: PDE rows plus the normalization row.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(base.nonZeros() + 3 * N + 1);
    for (int k = 0; k < base.outerSize(); ++k)
      for (SpMat::InnerIterator itr(base, k); itr; ++itr)
        trips.emplace_back(itr.row(), itr.col(), itr.value());
    for (Eigen::Index i = 0; i < N; ++i) {
      const double p = st.phi[i];
      trips.emplace_back(i, i, -lambda * st.mu - 1.5 * q[i] / (p * p * p * p));
      trips.emplace_back(i, N, -lambda * p);
      trips.emplace_back(N, i, 2.0 * geom.w0[i] * p);
    }
    SpMat Jac(N + 1, N + 1);
    Jac.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<SpMat> lu;
    lu.compute(Jac);
    if (lu.info() != Eigen::Success) throw SolverError("Yermakov Newton factorization failed");
    Eigen::VectorXd rhs(N + 1);
    rhs.head(N) = -G;
    rhs[N] = -ncon;
    Eigen::VectorXd step = lu.solve(rhs);

    // Positivity line search, then a residual backtrack.
    double alpha = 1.0;
    auto candidate_min = [&](double a) { return (st.phi + a * step.head(N)).minCoeff(); };
    while (alpha > 1e-8 && candidate_min(alpha) <= 0) alpha *= 0.5;
    if (alpha <= 1e-8) {
      std::ostringstream msg;
      msg << "positivity line search failed: approaching phi -> 0 singularity (residual " << res
          << ")";
      throw SolverError(msg.str());
    }
    ScalarField Gn;
    double nn = 0.0;
    double res_new = residual(st.phi + alpha * step.head(N), st.mu + alpha * step[N], Gn, nn);
    while (alpha > 1e-8 && res_new > (1.0 - 1e-4 * alpha) * res) {
      alpha *= 0.5;
      if (candidate_min(alpha) <= 0) continue;
      res_new = residual(st.phi + alpha * step.head(N), st.mu + alpha * step[N], Gn, nn);
    }
    if (res_new > (1.0 - 1e-4 * alpha) * res && res_new > stop) {
      std::ostringstream msg;
      msg << "Newton stalled; residual history:";
      for (double h : st.history) msg << " " << h;
      throw SolverError(msg.str());
    }
    st.phi += alpha * step.head(N);
    st.mu += alpha * step[N];
    G = Gn;
    ncon = nn;
    res = res_new;
    st.history.push_back(res);
    st.iterations = it + 1;
  }
  if (res <= stop) {
    st.residual = res;
    return st;
  }
  std::ostringstream msg;
  msg << "Newton did not converge in " << tol.newton_max_iter << " iterations; residual history:";
  for (double h : st.history) msg << " " << h;
  throw SolverError(msg.str());
}

}  // namespace

SolveResult solve_fixed_current(const ProblemSpec& spec) {
  validate_spec(spec, ProblemVariant::FixedCurrent);
  const Geometry& geom = *spec.geom;
  const double lambda = spec.lambda;
  const OneForm& J = spec.J_target;
  if (J.data.size() != geom.dim() * geom.size())
    throw ConfigError("fixed current does not match grid");
  const double divJ = geom.norm0(geom.codifferential(J));
  if (divJ > 1e-8)
    throw ConfigError("fixed current must be divergence free: |delta J| = " + std::to_string(divJ));

  // The gauge field drops out of the fixed-current problem.
  PotentialField W = assemble_yermakov_W(geom, lambda, spec.V, spec.f);
  ScalarField q = geom.pointwise_norm2(J);

  // Ground-state start from the zero-current problem.
  ProblemSpec sym = spec;
  sym.variant = ProblemVariant::Symmetrizable;
  sym.A = OneForm(geom.dim(), geom.size());
  SolveResult ground = solve_symmetrizable(sym);

  YermakovState st;
  try {
    st = newton_yermakov(geom, W.W, lambda, q, ground.potential, ground.mu.value(), spec.tol);
  } catch (const SolverError&) {
    // Homotopy fallback: ramp the current toward the target in four steps.
    ScalarField phi = ground.potential;
    double mu = ground.mu.value();
    for (int s = 1; s <= 4; ++s) {
      const double scale = static_cast<double>(s) / 4.0;
      st = newton_yermakov(geom, W.W, lambda, (scale * scale) * q, phi, mu, spec.tol);
      phi = st.phi;
      mu = st.mu;
    }
  }

  SolveResult out;
  out.potential = st.phi;
  out.potential_kind = PotentialKind::SqrtDensity;
  out.mu = st.mu;
  out.rho = st.phi.cwiseProduct(st.phi);
  out.J = J;
  out.u = control_from_density_current(geom, out.rho, J, spec.f);
  OneForm A0(geom.dim(), geom.size());
  out.cost = cost_rho_J(geom, out.rho, J, lambda, spec.V, spec.f, A0);
  // Multiplier identity for the cost; note the |J|^2 / rho term.
  out.value_identity_cost = -st.mu - geom.inner1(spec.f, J) / lambda +
                            geom.quad(q.cwiseQuotient(out.rho)) / lambda;

  out.residuals.pde = st.residual;
  out.residuals.delta_J = divJ;
  out.residuals.newton_iterations = st.iterations;
  GeneratorMatrix Lu = assemble_adjoint(assemble_generator(geom, spec.f + out.u));
  out.residuals.fokker_planck =
      geom.norm0(Lu.L * out.rho) / geom.norm0(out.rho);
  OneForm u_rt = control_from_density_current(geom, out.rho, out.J, spec.f);
  out.residuals.triple = (u_rt.data - out.u.data).cwiseAbs().maxCoeff();
  out.warnings = Lu.warnings;
  return out;
}

SolveResult solve(const ProblemSpec& spec) {
  switch (spec.variant) {
    case ProblemVariant::Unconstrained:
      return solve_unconstrained(spec);
    case ProblemVariant::FixedDensity:
      return solve_fixed_density(spec);
    case ProblemVariant::FixedCurrent:
      return solve_fixed_current(spec);
    case ProblemVariant::Symmetrizable:
      return solve_symmetrizable(spec);
  }
  throw ConfigError("unknown problem variant");
}

// ---------------------------------------------------------------------------
// circle closed form and harmonic representatives
// ---------------------------------------------------------------------------

ScalarField circle_fixed_density_closed_form(const Geometry& geom, const ScalarField& rho,
                                             double k) {
  if (geom.dim() != 1) throw ConfigError("closed form is defined on the circle");
  const Eigen::Index n = geom.size();
  if (rho.size() != n) throw ConfigError("density does not match grid");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(rho[i] > 0)) throw ConfigError("density must be positive");
  const double h = geom.grid.h1;
  ScalarField rinv = rho.cwiseInverse();
  // Cumulative trapezoid of 1/rho from 0 to theta_i, plus the full period.
  Eigen::VectorXd cum(n + 1);
  cum[0] = 0.0;
  for (Eigen::Index i = 1; i <= n; ++i)
    cum[i] = cum[i - 1] + 0.5 * h * (rinv[i - 1] + rinv[i % n]);
  const double total = cum[n];
  ScalarField phi(n);
  for (Eigen::Index i = 0; i < n; ++i)
    phi[i] = k * (geom.grid.theta1[i] * total - kTwoPi * cum[i]) / total;
  return phi;
}

CircleDecomposition decompose_circle_one_form(const Geometry& geom, const OneForm& beta) {
  if (geom.dim() != 1) throw ConfigError("decomposition is defined on the circle");
  const Eigen::Index n = geom.size();
  const double h = geom.grid.h1;
  CircleDecomposition d;
  d.k = beta.comp(0).sum() * h / std::numbers::pi;
  // dU = (k - 2 beta) dtheta, integrated by cumulative trapezoid.
  ScalarField g = ScalarField::Constant(n, d.k) - 2.0 * ScalarField(beta.comp(0));
  d.U.resize(n);
  d.U[0] = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) d.U[i] = d.U[i - 1] + 0.5 * h * (g[i - 1] + g[i]);
  return d;
}

OneForm harmonic_gauge(const Geometry& geom, const std::vector<CyclePoint>& cycle) {
  if (geom.dim() != 1) throw ConfigError("point cycles live on the circle");
  double total = 0.0;
  for (const auto& p : cycle) total += p.weight;
  const double vol = geom.quad(ScalarField::Ones(geom.size()));
  OneForm A(1, geom.size());
  // c * sqrt(g) dtheta is harmonic and has loop period equal to the cycle
  // weight; flat metric reduces to (total / 2 pi) dtheta.
  A.comp(0) = (total / vol) * geom.metric.sqrtg;
  return A;
}

OneForm harmonic_gauge(const Geometry& geom, int p, int q) {
  if (geom.dim() != 2) throw ConfigError("homology class (p,q) lives on the torus");
  auto is_const = [](const Eigen::VectorXd& v) {
    return (v.array() - v[0]).abs().maxCoeff() <= 1e-12 * (1.0 + std::abs(v[0]));
  };
  if (!is_const(geom.metric.g11) || !is_const(geom.metric.g12) || !is_const(geom.metric.g22))
    throw ConfigError("harmonic gauge on a curved torus is not supported");
  OneForm A(2, geom.size());
  A.comp(0).setConstant(p / kTwoPi);
  A.comp(1).setConstant(q / kTwoPi);
  return A;
}

SolveResult gauge_transform(const SolveResult& result, const ScalarField& phi, double lambda) {
  if (result.potential_kind != PotentialKind::Psi)
    throw ConfigError("gauge transform applies to eigenfunction (psi) solutions");
  if (phi.size() != result.potential.size())
    throw ConfigError("gauge function does not match grid");
  SolveResult out = result;
  out.potential = result.potential.cwiseProduct((lambda * phi).array().exp().matrix());
  return out;
}

}  // namespace ergo
