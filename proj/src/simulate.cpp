#include "ergo/simulate.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <thread>

namespace ergo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ---- counter-based RNG: philox4x32-10, one stream per (seed, trajectory) ----

struct Philox {
  std::uint32_t key0, key1;
  std::uint32_t ctr2, ctr3;  // stream identifier
  std::uint64_t block = 0;
  double cached = 0.0;
  bool has_cached = false;

  Philox(std::uint64_t seed, std::uint64_t stream) {
    key0 = static_cast<std::uint32_t>(seed);
    key1 = static_cast<std::uint32_t>(seed >> 32);
    ctr2 = static_cast<std::uint32_t>(stream);
    ctr3 = static_cast<std::uint32_t>(stream >> 32) ^ 0x243F6A88u;
  }

  static inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                             std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  void next_block(std::uint32_t out[4]) {
    std::uint32_t c0 = static_cast<std::uint32_t>(block);
    std::uint32_t c1 = static_cast<std::uint32_t>(block >> 32);
    std::uint32_t c2 = ctr2, c3 = ctr3;
    std::uint32_t k0 = key0, k1 = key1;
    for (int r = 0; r < 10; ++r) {
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, c0, hi0, lo0);
      mulhilo(0xCD9E8D57u, c2, hi1, lo1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out[0] = c0;
    out[1] = c1;
    out[2] = c2;
    out[3] = c3;
    ++block;
  }

  double normal() {
    if (has_cached) {
      has_cached = false;
      return cached;
    }
    std::uint32_t w[4];
    next_block(w);
    const std::uint64_t a = (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
    const std::uint64_t b = (static_cast<std::uint64_t>(w[2]) << 32) | w[3];
    const double u1 = ((a >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = (b >> 11) * 0x1.0p-53;        // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached = r * std::sin(kTwoPi * u2);
    has_cached = true;
    return r * std::cos(kTwoPi * u2);
  }
};

// ---- periodic interpolation ----

inline void locate(double t, int n, double h, int& i0, int& i1, double& w) {
  const double x = t / h;
  const double fl = std::floor(x);
  i0 = static_cast<int>(fl) % n;
  if (i0 < 0) i0 += n;
  i1 = i0 + 1 == n ? 0 : i0 + 1;
  w = x - fl;
}

struct Interp {
  const Grid* grid;
  int i0, i1, j0, j1;
  double wx, wy;

  void at(const Grid& g, double t1, double t2) {
    grid = &g;
    locate(t1, g.n1, g.h1, i0, i1, wx);
    if (g.dim() == 2)
      locate(t2, g.n2, g.h2, j0, j1, wy);
    else {
      j0 = j1 = 0;
      wy = 0.0;
    }
  }

  double value(const double* f) const {
    const Grid& g = *grid;
    if (g.dim() == 1) return (1 - wx) * f[i0] + wx * f[i1];
    const double a = (1 - wx) * f[g.index(i0, j0)] + wx * f[g.index(i1, j0)];
    const double b = (1 - wx) * f[g.index(i0, j1)] + wx * f[g.index(i1, j1)];
    return (1 - wy) * a + wy * b;
  }
};

struct NodeFields {
  // Contravariant Ito drift, noise factor, covariant gauge field, costs.
  Eigen::VectorXd drift1, drift2;
  Eigen::VectorXd s11, s12, s22;
  Eigen::VectorXd A1, A2;
  Eigen::VectorXd V, unorm2;
  double max_drift1 = 0.0, max_drift2 = 0.0;
};

NodeFields precompute_fields(const Geometry& geom, const ScalarField& V, const OneForm& f,
                             const OneForm& A, const OneForm& u) {
  NodeFields nf;
  const Metric& mt = geom.metric;
  OneForm net = f + u;
  OneForm net_sharp = geom.raise_index(net);
  if (geom.dim() == 1) {
    nf.drift1 = ScalarField(net_sharp.comp(0)) -
                0.5 * mt.inv11.cwiseProduct(mt.gamma1_11);
    nf.s11 = mt.s11;
    nf.A1 = A.comp(0);
  } else {
    ScalarField tr1 = mt.inv11.cwiseProduct(mt.gamma1_11) +
                      2.0 * mt.inv12.cwiseProduct(mt.gamma1_12) +
                      mt.inv22.cwiseProduct(mt.gamma1_22);
    ScalarField tr2 = mt.inv11.cwiseProduct(mt.gamma2_11) +
                      2.0 * mt.inv12.cwiseProduct(mt.gamma2_12) +
                      mt.inv22.cwiseProduct(mt.gamma2_22);
    nf.drift1 = ScalarField(net_sharp.comp(0)) - 0.5 * tr1;
    nf.drift2 = ScalarField(net_sharp.comp(1)) - 0.5 * tr2;
    nf.s11 = mt.s11;
    nf.s12 = mt.s12;
    nf.s22 = mt.s22;
    nf.A1 = A.comp(0);
    nf.A2 = A.comp(1);
    nf.max_drift2 = nf.drift2.cwiseAbs().maxCoeff();
  }
  nf.max_drift1 = nf.drift1.cwiseAbs().maxCoeff();
  nf.V = V;
  nf.unorm2 = geom.pointwise_norm2(u);
  return nf;
}

struct TrajPartial {
  Eigen::VectorXd occupation;
  Eigen::VectorXd cur_raw;  // stacked contravariant sums on bins
  std::array<std::int64_t, 2> wind = {0, 0};
  double t_acc = 0.0;
  std::uint64_t steps = 0;
  std::vector<double> batch_state, batch_control, batch_gauge, batch_ito;
  std::vector<std::array<double, 2>> batch_winding;
};

inline double wrap_angle(double t) {
  t = std::fmod(t, kTwoPi);
  return t < 0 ? t + kTwoPi : t;
}

void run_trajectory(const Geometry& geom, const NodeFields& nf, const SimConfig& cfg,
                    double burn, int traj_index, TrajPartial& out) {
  const int m = geom.dim();
  const Grid& grid = geom.grid;
  const int nb = cfg.bins;
  const double hb1 = kTwoPi / nb;
  const double hb2 = kTwoPi / nb;
  const Eigen::Index B = m == 1 ? nb : static_cast<Eigen::Index>(nb) * nb;

  out.occupation = Eigen::VectorXd::Zero(B);
  out.cur_raw = Eigen::VectorXd::Zero(m * B);

  Philox rng(cfg.seed, static_cast<std::uint64_t>(traj_index));
  const double dt = cfg.dt;
  const double sq_dt = std::sqrt(dt);
  const std::uint64_t total_steps = static_cast<std::uint64_t>(std::llround(cfg.T / dt));
  const std::uint64_t burn_steps = static_cast<std::uint64_t>(std::llround(burn / dt));
  const std::uint64_t acc_steps = total_steps > burn_steps ? total_steps - burn_steps : 0;
  const int K = static_cast<int>(std::min<std::uint64_t>(32, std::max<std::uint64_t>(1, acc_steps)));
  const std::uint64_t batch_len = std::max<std::uint64_t>(1, acc_steps / K);

  double x1 = wrap_angle(cfg.x0[0]);
  double x2 = m == 2 ? wrap_angle(cfg.x0[1]) : 0.0;
  double un1 = x1, un2 = x2;  // unwrapped coordinates
  std::int64_t w1 = 0, w2 = 0;
  std::int64_t w1_batch0 = 0, w2_batch0 = 0;
  double b_state = 0.0, b_control = 0.0, b_gauge = 0.0, b_ito = 0.0;
  std::uint64_t in_batch = 0;

  Interp ip;
  auto flush_batch = [&](std::uint64_t nsteps) {
    const double tau = nsteps * dt;
    if (tau <= 0) return;
    out.batch_state.push_back(b_state / tau);
    out.batch_control.push_back(b_control / tau);
    out.batch_gauge.push_back(b_gauge / tau);
    out.batch_ito.push_back(b_ito / tau);
    out.batch_winding.push_back({(w1 - w1_batch0) / tau, (w2 - w2_batch0) / tau});
    b_state = b_control = b_gauge = b_ito = 0.0;
    w1_batch0 = w1;
    w2_batch0 = w2;
    in_batch = 0;
  };

  for (std::uint64_t step = 0; step < total_steps; ++step) {
    ip.at(grid, x1, x2);
    double d1 = ip.value(nf.drift1.data());
    double dx1, dx2 = 0.0;
    if (m == 1) {
      const double s = ip.value(nf.s11.data());
      dx1 = d1 * dt + s * sq_dt * rng.normal();
    } else {
      const double d2 = ip.value(nf.drift2.data());
      const double s11 = ip.value(nf.s11.data());
      const double s12 = ip.value(nf.s12.data());
      const double s22 = ip.value(nf.s22.data());
      const double z1 = rng.normal(), z2 = rng.normal();
      dx1 = d1 * dt + sq_dt * (s11 * z1 + s12 * z2);
      dx2 = d2 * dt + sq_dt * (s12 * z1 + s22 * z2);
    }
    // a step of more than ~1e9 radians means the integration lost meaning
    // (and would overflow the winding counters)
    if (!std::isfinite(dx1) || !std::isfinite(dx2) || std::abs(dx1) > 1e9 || std::abs(dx2) > 1e9)
      throw SimulationError("trajectory blow-up at step " + std::to_string(step));

    const bool accumulate = step >= burn_steps;
    if (accumulate) {
      // occupation measure at the pre-step point
      int b1 = static_cast<int>(std::floor(x1 / hb1 + 0.5)) % nb;
      if (b1 < 0) b1 += nb;
      Eigen::Index bin = b1;
      if (m == 2) {
        int b2 = static_cast<int>(std::floor(x2 / hb2 + 0.5)) % nb;
        if (b2 < 0) b2 += nb;
        bin = static_cast<Eigen::Index>(b2) * nb + b1;
      }
      out.occupation[bin] += dt;
      b_state += ip.value(nf.V.data()) * dt;
      b_control += ip.value(nf.unorm2.data()) * dt;
      const double a1_left = ip.value(nf.A1.data());
      const double a2_left = m == 2 ? ip.value(nf.A2.data()) : 0.0;

      // midpoint (Stratonovich) evaluations
      Interp mid;
      mid.at(grid, wrap_angle(x1 + 0.5 * dx1), wrap_angle(x2 + 0.5 * dx2));
      b_gauge += mid.value(nf.A1.data()) * dx1;
      b_ito += a1_left * dx1;
      if (m == 2) {
        b_gauge += mid.value(nf.A2.data()) * dx2;
        b_ito += a2_left * dx2;
      }
      int mb1 = static_cast<int>(std::floor(wrap_angle(x1 + 0.5 * dx1) / hb1 + 0.5)) % nb;
      if (mb1 < 0) mb1 += nb;
      Eigen::Index mbin = mb1;
      if (m == 2) {
        int mb2 = static_cast<int>(std::floor(wrap_angle(x2 + 0.5 * dx2) / hb2 + 0.5)) % nb;
        if (mb2 < 0) mb2 += nb;
        mbin = static_cast<Eigen::Index>(mb2) * nb + mb1;
      }
      out.cur_raw[mbin] += dx1;
      if (m == 2) out.cur_raw[B + mbin] += dx2;

      out.t_acc += dt;
      ++out.steps;
      ++in_batch;
      if (in_batch >= batch_len && static_cast<std::uint64_t>(out.batch_state.size()) + 1 < static_cast<std::uint64_t>(K))
        flush_batch(in_batch);
    }

    un1 += dx1;
    const std::int64_t n1 = static_cast<std::int64_t>(std::floor(un1 / kTwoPi));
    if (accumulate) w1 += n1 - static_cast<std::int64_t>(std::floor((un1 - dx1) / kTwoPi));
    x1 = wrap_angle(x1 + dx1);
    if (m == 2) {
      un2 += dx2;
      const std::int64_t n2 = static_cast<std::int64_t>(std::floor(un2 / kTwoPi));
      if (accumulate) w2 += n2 - static_cast<std::int64_t>(std::floor((un2 - dx2) / kTwoPi));
      x2 = wrap_angle(x2 + dx2);
    }
  }
  if (in_batch > 0) flush_batch(in_batch);
  out.wind = {w1, w2};
}

Estimate batch_estimate(const std::vector<double>& means) {
  Estimate e;
  const std::size_t K = means.size();
  if (K == 0) return e;
  double s = 0.0;
  for (double v : means) s += v;
  e.mean = s / K;
  if (K > 1) {
    double var = 0.0;
    for (double v : means) var += (v - e.mean) * (v - e.mean);
    e.stderr_ = std::sqrt(var / (K * (K - 1)));
  }
  return e;
}

}  // namespace

double interpolate_scalar(const Geometry& geom, const ScalarField& field, double t1, double t2) {
  Interp ip;
  ip.at(geom.grid, wrap_angle(t1), wrap_angle(t2));
  return ip.value(field.data());
}

TrajectoryStats simulate(const ProblemSpec& spec, const OneForm& u, const SimConfig& cfg) {
  if (!spec.geom) throw ConfigError("simulation needs a geometry");
  const Geometry& geom = *spec.geom;
  if (!(cfg.dt > 0)) throw ConfigError("dt must be positive");
  if (cfg.T < 100 * cfg.dt) throw ConfigError("horizon T must be at least 100 dt");
  if (cfg.bins < 16) throw ConfigError("at least 16 bins per axis");
  if (cfg.trajectories < 1) throw ConfigError("at least one trajectory");
  if (!u.data.allFinite()) throw ConfigError("control field has non-finite entries");
  const double burn = cfg.burn_in < 0 ? 0.05 * cfg.T : cfg.burn_in;
  if (burn >= cfg.T) throw ConfigError("burn-in must be shorter than the horizon");

  NodeFields nf = precompute_fields(geom, spec.V, spec.f, spec.A, u);

  TrajectoryStats stats;
  stats.dt = cfg.dt;
  const double hmin = geom.dim() == 1 ? geom.grid.h1 : std::min(geom.grid.h1, geom.grid.h2);
  if (cfg.dt * std::max(nf.max_drift1, nf.max_drift2) > hmin)
    stats.warnings.push_back("dt * max drift exceeds the grid spacing; decrease dt");

  std::vector<TrajPartial> parts(cfg.trajectories);
  const int nthreads = std::max(1, std::min(cfg.threads, cfg.trajectories));
  std::exception_ptr err;
  std::mutex err_mutex;
  auto work = [&](int lo, int hi) {
    try {
      for (int i = lo; i < hi; ++i) run_trajectory(geom, nf, cfg, burn, i, parts[i]);
    } catch (...) {
      std::lock_guard<std::mutex> g(err_mutex);
      if (!err) err = std::current_exception();
    }
  };
  if (nthreads == 1) {
    work(0, cfg.trajectories);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (cfg.trajectories + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
      const int lo = t * chunk;
      const int hi = std::min(cfg.trajectories, lo + chunk);
      if (lo < hi) pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);

  // Merge partial sums in trajectory-index order.
  const int m = geom.dim();
  const int nb = cfg.bins;
  const Eigen::Index B = m == 1 ? nb : static_cast<Eigen::Index>(nb) * nb;
  stats.occupation = Eigen::VectorXd::Zero(B);
  stats.current_raw = Eigen::VectorXd::Zero(m * B);
  std::vector<double> all_state, all_control, all_gauge, all_ito;
  std::vector<std::array<double, 2>> all_wind;
  for (const auto& p : parts) {
    stats.occupation += p.occupation;
    stats.current_raw += p.cur_raw;
    stats.winding_count[0] += p.wind[0];
    stats.winding_count[1] += p.wind[1];
    stats.T_effective += p.t_acc;
    stats.steps += p.steps;
    all_state.insert(all_state.end(), p.batch_state.begin(), p.batch_state.end());
    all_control.insert(all_control.end(), p.batch_control.begin(), p.batch_control.end());
    all_gauge.insert(all_gauge.end(), p.batch_gauge.begin(), p.batch_gauge.end());
    all_ito.insert(all_ito.end(), p.batch_ito.begin(), p.batch_ito.end());
    all_wind.insert(all_wind.end(), p.batch_winding.begin(), p.batch_winding.end());
  }
  stats.batch_state = all_state;
  stats.batch_control = all_control;
  stats.batch_gauge = all_gauge;
  stats.batch_ito = all_ito;
  stats.batch_winding = all_wind;

  // Bin geometry: bins are node-centered on their own periodic grid.
  {
    MetricSamples ms;
    const Eigen::Index nb2 = m == 1 ? 1 : nb;
    ms.g11.resize(B);
    if (m == 2) {
      ms.g12.resize(B);
      ms.g22.resize(B);
    }
    const double hb = kTwoPi / nb;
    for (Eigen::Index j = 0; j < nb2; ++j)
      for (Eigen::Index i = 0; i < nb; ++i) {
        const double t1 = i * hb, t2 = j * hb;
        const Eigen::Index idx = j * nb + i;
        ms.g11[idx] = interpolate_scalar(geom, geom.metric.g11, t1, t2);
        if (m == 2) {
          ms.g12[idx] = interpolate_scalar(geom, geom.metric.g12, t1, t2);
          ms.g22[idx] = interpolate_scalar(geom, geom.metric.g22, t1, t2);
        }
      }
    stats.bin_geometry = std::make_shared<Geometry>(
        build_geometry(geom.grid.kind, nb, m == 1 ? 1 : nb, ms));
  }

  const Geometry& bg = *stats.bin_geometry;
  const double total_time = stats.occupation.sum();
  stats.density = ScalarField::Zero(B);
  if (total_time > 0)
    stats.density = stats.occupation.cwiseQuotient(bg.w0 * total_time);

  OneForm contra(m, B);
  for (int k = 0; k < m; ++k)
    contra.comp(k) =
        stats.current_raw.segment(k * B, B).cwiseQuotient(bg.w0 * std::max(stats.T_effective, 1e-300));
  stats.current = bg.lower_index(contra);
  stats.delta_current_norm = bg.norm0(bg.codifferential(stats.current));

  const double lam = spec.lambda;
  Estimate st = batch_estimate(all_state);
  std::vector<double> ctrl_scaled(all_control.size());
  for (std::size_t i = 0; i < all_control.size(); ++i) ctrl_scaled[i] = all_control[i] / (2 * lam);
  Estimate ct = batch_estimate(ctrl_scaled);
  Estimate gt = batch_estimate(all_gauge);
  std::vector<double> tot(all_state.size());
  for (std::size_t i = 0; i < tot.size(); ++i)
    tot[i] = all_state[i] + ctrl_scaled[i] + all_gauge[i];
  Estimate tt = batch_estimate(tot);
  std::vector<double> diff(all_gauge.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = all_gauge[i] - all_ito[i];
  stats.strat_minus_ito = batch_estimate(diff);

  stats.cost_state = st;
  stats.cost_control = ct;
  stats.cost_gauge = gt;
  stats.cost_total = tt;
  stats.cost.state = st.mean;
  stats.cost.control = ct.mean;
  stats.cost.gauge = gt.mean;
  stats.cost.total = tt.mean;

  for (int k = 0; k < m; ++k) {
    std::vector<double> wr(all_wind.size());
    for (std::size_t i = 0; i < wr.size(); ++i) wr[i] = all_wind[i][k];
    stats.winding[k] = batch_estimate(wr);
    if (stats.T_effective > 0)
      stats.winding[k].mean = static_cast<double>(stats.winding_count[k]) / stats.T_effective;
  }
  return stats;
}

const OneForm& empirical_current(const TrajectoryStats& stats) { return stats.current; }

Estimate winding_rate(const TrajectoryStats& stats, int generator_index) {
  const int m = stats.bin_geometry ? stats.bin_geometry->dim() : 1;
  if (generator_index < 0 || generator_index >= m)
    throw ConfigError("invalid homology generator index");
  return stats.winding[generator_index];
}

CostBreakdown pathwise_cost(const TrajectoryStats& stats) { return stats.cost; }

}  // namespace ergo
