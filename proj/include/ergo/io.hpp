#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ergo/simulate.hpp"
#include "ergo/solvers.hpp"

namespace ergo::io {

using json = nlohmann::ordered_json;

// ---- field and metric construction from presets or CSV ----

ScalarField scalar_from_json(const Geometry& geom, const json& j);
OneForm one_form_from_json(const Geometry& geom, const json& j);
MetricSamples metric_from_json(ManifoldKind kind, int n1, int n2, const json& j,
                               const std::filesystem::path& base_dir);

ScalarField load_scalar_csv(const Geometry& geom, const std::filesystem::path& path);
OneForm load_one_form_csv(const Geometry& geom, const std::filesystem::path& path);

// ---- run configuration ----

struct RunConfig {
  std::shared_ptr<Geometry> geom;
  ProblemSpec spec;
  bool has_simulation = false;
  SimConfig sim;
  std::string out_dir = "out";
  json echo;
};

RunConfig load_run_config(const std::filesystem::path& path);

// ---- artifact writers (full double precision, stable layout) ----

void write_solution_csv(const std::filesystem::path& path, const Geometry& geom,
                        const SolveResult& result);
void write_diagnostics_json(const std::filesystem::path& path, const RunConfig& cfg,
                            const SolveResult& result);
void write_histogram_csv(const std::filesystem::path& path, const TrajectoryStats& stats);
void write_current_csv(const std::filesystem::path& path, const TrajectoryStats& stats);

/// Monte Carlo summary; when `result` is given, the comparison checks of the
/// verify pipeline are included.
json mc_summary(const RunConfig& cfg, const TrajectoryStats& stats, const SolveResult* result);

std::string format_double(double v);

}  // namespace ergo::io
