#pragma once

// Declarative rank-by-seed experiment sweeps driven by a JSON document.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrvi/planner.hpp"
#include "lrvi/svi.hpp"

namespace lrvi {

enum class ExperimentKind { gaussian_synthetic, logistic_arrhythmia, linear_uq, planner_report };

enum class LogisticAlgorithm { gauss, general, tracking };

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::gaussian_synthetic;
  nlohmann::json target;  ///< kind-specific target description
  std::vector<Eigen::Index> ranks;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir = "svi_out";
  SviConfig svi;                       ///< rank and seed are overwritten per cell
  std::optional<double> budget;        ///< when set, (N, T, M) come from allocate_budget
  double delta = 0.1;                  ///< failure probability of the allocation rule
  bool scale_samples_with_rank = false;///< N_p = N max(1, p)
  LogisticAlgorithm algorithm = LogisticAlgorithm::gauss;
  Eigen::Index rounds = 1;             ///< K for the outer loop
  nlohmann::json oracle;               ///< fixed-point options for logistic baselines
  std::optional<nlohmann::json> planner;
  std::optional<unsigned> threads;     ///< overrides SVI_THREADS

  /// Throws ConfigError on unknown kinds, empty rank or seed lists, or bad values.
  static ExperimentSpec from_json(const nlohmann::json& doc);
  static ExperimentSpec from_file(const std::filesystem::path& path);
};

std::string to_string(ExperimentKind kind);

/// Planner section {beta, c, d, Pi, nu_kl, nu_uq, alpha, L, delta, n, c_x}.
std::pair<SpectrumModel, PlannerInputs> parse_planner(const nlohmann::json& doc);

struct CellOutcome {
  Eigen::Index rank = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string message;
  std::optional<double> final_metric;
};

struct SummaryRow {
  Eigen::Index rank = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct ExperimentOutcome {
  int exit_code = 0;
  std::string metric;  ///< "kl" or "frob_err"
  std::vector<CellOutcome> cells;
  std::vector<SummaryRow> summary;
};

/// Mean and two-sided 95% Student-t interval.
SummaryRow summarize(Eigen::Index rank, const std::vector<double>& values);

/// Runs every (rank, seed) cell and writes trace_r{rank}_s{seed}.csv,
/// model_r{rank}_s{seed}.json, cells.csv, summary.csv, convergence.svg and
/// baseline.json into the output directory (created if needed). Exit code
/// is 3 only when every cell failed.
ExperimentOutcome run_experiment(const ExperimentSpec& spec);

struct ComparisonRow {
  std::string model_file;
  Eigen::Index rank = 0;
  std::uint64_t seed = 0;
  double distance = 0.0;
  std::string log10_distance;  ///< "exact (<1e-12)" when the distance underflows the guard
};

/// log10 ||baseline - scale * Omega_fit||_F for every model_r*_s*.json in
/// run_dir; writes comparison.csv and adds a per-rank mean column to
/// summary.csv when present. Throws Error naming the expected path when the
/// baseline is missing and ContractError on dimension mismatch.
std::vector<ComparisonRow> compare_to_baseline(const std::filesystem::path& run_dir,
                                               const std::filesystem::path& baseline);

/// Minimal SVG line chart: one polyline per series on log10 metric vs evals.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
std::string render_svg(const std::vector<PlotSeries>& series, const std::string& x_label,
                       const std::string& y_label);

}  // namespace lrvi
