// svi: command-line harness for rank sweeps, planning and baseline comparison.
//
//   svi run <spec.json>
//   svi plan <spec.json>
//   svi compare <run_dir> <baseline.json>
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lrvi/errors.hpp"
#include "lrvi/experiment.hpp"
#include "lrvi/planner.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lrvi::ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw lrvi::ConfigError(path + ": " + e.what());
  }
}

int cmd_run(const std::string& spec_path) {
  const lrvi::ExperimentSpec spec = lrvi::ExperimentSpec::from_file(spec_path);
  const lrvi::ExperimentOutcome out = lrvi::run_experiment(spec);
  if (spec.kind == lrvi::ExperimentKind::planner_report) {
    std::cout << "wrote " << (spec.output_dir / "plan.json").string() << '\n';
    return 0;
  }
  std::size_t failed = 0;
  for (const auto& c : out.cells) {
    if (!c.ok) {
      ++failed;
      std::cerr << "cell rank=" << c.rank << " seed=" << c.seed << " failed: " << c.message << '\n';
    }
  }
  std::cout << "cells: " << out.cells.size() - failed << " ok, " << failed << " failed\n";
  std::cout << "rank  count  mean_final_" << out.metric << "  ci95\n";
  for (const auto& r : out.summary) {
    std::printf("%-5ld %-6zu %-18.6g [%.6g, %.6g]\n", static_cast<long>(r.rank), r.count, r.mean,
                r.ci_low, r.ci_high);
  }
  std::cout << "artifacts in " << spec.output_dir.string() << '\n';
  return out.exit_code;
}

int cmd_plan(const std::string& spec_path) {
  const nlohmann::json doc = read_json(spec_path);
  const nlohmann::json& section = doc.contains("planner") ? doc.at("planner") : doc;
  const auto [model, inputs] = lrvi::parse_planner(section);
  std::cout << lrvi::planner_report(model, inputs).dump(1) << '\n';
  return 0;
}

int cmd_compare(const std::string& run_dir, const std::string& baseline) {
  const auto rows = lrvi::compare_to_baseline(run_dir, baseline);
  std::cout << "model  log10_frob_distance\n";
  for (const auto& r : rows) std::cout << r.model_file << "  " << r.log10_distance << '\n';
  std::cout << "wrote " << (std::filesystem::path(run_dir) / "comparison.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank Gaussian variational inference harness"};
  app.require_subcommand(1);

  std::string run_spec;
  auto* run = app.add_subcommand("run", "Run a rank x seed sweep described by a JSON spec");
  run->add_option("spec", run_spec, "experiment spec (JSON)")->required();

  std::string plan_spec;
  auto* plan = app.add_subcommand("plan", "Print the rank / budget planner report");
  plan->add_option("spec", plan_spec, "spec with a 'planner' section (JSON)")->required();

  std::string run_dir, baseline;
  auto* compare = app.add_subcommand("compare", "Frobenius distance of fitted models to a baseline");
  compare->add_option("run_dir", run_dir, "directory written by 'svi run'")->required();
  compare->add_option("baseline", baseline, "baseline precision (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*run) return cmd_run(run_spec);
    if (*plan) return cmd_plan(plan_spec);
    if (*compare) return cmd_compare(run_dir, baseline);
  } catch (const lrvi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const lrvi::ParseError& e) {
    std::cerr << "parse error (row " << e.row() << ", column " << e.column() << "): " << e.what()
              << '\n';
    return kConfigExit;
  } catch (const lrvi::DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeExit;
  }
  return kConfigExit;
}
