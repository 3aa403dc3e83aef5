#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ergo/io.hpp"

namespace fs = std::filesystem;
using ergo::io::RunConfig;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool sim_flags) {
  cmd->add_option("--config", args.config_path, "problem configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
  if (sim_flags) {
    cmd->add_option("--seed", args.seed, "RNG seed (overrides config)");
    cmd->add_option("--threads", args.threads, "worker threads for trajectories");
  }
}

RunConfig load(const CommonArgs& args) {
  RunConfig rc = ergo::io::load_run_config(args.config_path);
  if (!args.out_dir.empty()) rc.out_dir = args.out_dir;
  if (args.seed >= 0) rc.sim.seed = static_cast<std::uint64_t>(args.seed);
  rc.sim.threads = args.threads;
  fs::create_directories(rc.out_dir);
  return rc;
}

int run_solve(const CommonArgs& args) {
  RunConfig rc = load(args);
  ergo::SolveResult result = ergo::solve(rc.spec);
  ergo::io::write_solution_csv(fs::path(rc.out_dir) / "solution.csv", *rc.geom, result);
  ergo::io::write_diagnostics_json(fs::path(rc.out_dir) / "diagnostics.json", rc, result);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "solve ok: cost total " << result.cost.total;
  if (result.mu) std::cout << ", mu " << *result.mu;
  std::cout << "\n";
  return 0;
}

int run_simulate(const CommonArgs& args, bool verify) {
  RunConfig rc = load(args);
  if (!rc.has_simulation)
    throw ergo::ConfigError("config has no 'simulation' block");
  ergo::SolveResult result = ergo::solve(rc.spec);
  ergo::io::write_solution_csv(fs::path(rc.out_dir) / "solution.csv", *rc.geom, result);
  ergo::io::write_diagnostics_json(fs::path(rc.out_dir) / "diagnostics.json", rc, result);

  ergo::TrajectoryStats stats = ergo::simulate(rc.spec, result.u, rc.sim);
  ergo::io::write_histogram_csv(fs::path(rc.out_dir) / "histogram.csv", stats);
  ergo::io::write_current_csv(fs::path(rc.out_dir) / "current.csv", stats);
  ergo::io::json summary = ergo::io::mc_summary(rc, stats, verify ? &result : nullptr);
  {
    std::ofstream out(fs::path(rc.out_dir) / "mc_summary.json");
    out << summary.dump(2) << "\n";
  }
  for (const auto& w : stats.warnings) std::cerr << "warning: " << w << "\n";
  if (verify) {
    const bool ok = summary.value("within_3sigma", false);
    std::cout << "verify " << (ok ? "PASS" : "FAIL") << ": see mc_summary.json\n";
  } else {
    std::cout << "simulate ok: cost total " << stats.cost.total << " +- "
              << stats.cost_total.stderr_ << "\n";
  }
  return 0;
}

int run_closed_form(const CommonArgs& args) {
  RunConfig rc = load(args);
  const ergo::Geometry& geom = *rc.geom;
  if (geom.dim() != 1)
    throw ergo::ConfigError("closed-form dump is defined on the circle");
  ergo::ScalarField rho = rc.spec.variant == ergo::ProblemVariant::FixedDensity
                              ? rc.spec.rho_target
                              : ergo::ScalarField::Constant(geom.size(),
                                                            1.0 / geom.quad(ergo::ScalarField::Ones(geom.size())));
  ergo::OneForm drive = rc.spec.f - rc.spec.lambda * rc.spec.A;
  ergo::CircleDecomposition dec = ergo::decompose_circle_one_form(geom, drive);
  ergo::ScalarField phi = ergo::circle_fixed_density_closed_form(geom, rho, dec.k);
  ergo::ScalarField Phi =
      -(rho.array().log().matrix() + dec.U - phi) / (2.0 * rc.spec.lambda);
  std::ofstream out(fs::path(rc.out_dir) / "closed_form.csv");
  if (!out) throw ergo::Error("cannot write closed_form.csv");
  out << "theta1,phi,Phi\n";
  for (Eigen::Index i = 0; i < geom.size(); ++i)
    out << ergo::io::format_double(geom.grid.coord1(i)) << ","
        << ergo::io::format_double(phi[i]) << "," << ergo::io::format_double(Phi[i]) << "\n";
  std::cout << "closed-form ok: k = " << dec.k << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ergodic control solvers and Monte Carlo verification on S^1 and T^2"};
  app.require_subcommand(1);

  CommonArgs solve_args, sim_args, verify_args, cf_args;
  CLI::App* solve_cmd = app.add_subcommand("solve", "solve the configured problem");
  add_common(solve_cmd, solve_args, false);
  CLI::App* sim_cmd = app.add_subcommand("simulate", "solve, then run the SDE simulation");
  add_common(sim_cmd, sim_args, true);
  CLI::App* verify_cmd =
      app.add_subcommand("verify", "solve, simulate, and compare against analytic values");
  add_common(verify_cmd, verify_args, true);
  CLI::App* cf_cmd = app.add_subcommand("closed-form", "dump the circle closed-form solution");
  add_common(cf_cmd, cf_args, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve_cmd->parsed()) return run_solve(solve_args);
    if (sim_cmd->parsed()) return run_simulate(sim_args, false);
    if (verify_cmd->parsed()) return run_simulate(verify_args, true);
    if (cf_cmd->parsed()) return run_closed_form(cf_args);
  } catch (const ergo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ergo::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  } catch (const ergo::SimulationError& e) {
    std::cerr << "simulation error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
