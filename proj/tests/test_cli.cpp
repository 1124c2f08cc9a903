#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lrvi/errors.hpp"
#include "lrvi/experiment.hpp"
#include "lrvi/oracle.hpp"
#include "lrvi/trace.hpp"
#include "support.hpp"

using namespace lrvi;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream b;
  b << in.rdbuf();
  return b.str();
}

json gaussian_doc(const fs::path& out) {
  return json{{"kind", "gaussian-synthetic"},
              {"target", {{"d", 100}, {"true_rank", 2}, {"alpha", 1.0}, {"seed", 4}}},
              {"ranks", {0, 1, 2, 4, 8}},
              {"seeds", {0, 1, 2, 3, 4}},
              {"output_dir", out.string()},
              {"svi", {{"N", 200}, {"T", 20}, {"M", 40}, {"log_stride", 5}}}};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SVI_BINARY) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(1); }

}  // namespace

TEST_CASE("experiment documents with bad fields are rejected") {
  const json good = gaussian_doc("x");
  CHECK_NOTHROW(ExperimentSpec::from_json(good));

  json j = good;
  j["ranks"] = json::array();
  CHECK_THROWS_AS(ExperimentSpec::from_json(j), ConfigError);
  j = good;
  j["seeds"] = json::array();
  CHECK_THROWS_AS(ExperimentSpec::from_json(j), ConfigError);
  j = good;
  j["colour"] = "blue";
  CHECK_THROWS_AS(ExperimentSpec::from_json(j), ConfigError);
  j = good;
  j["svi"]["TT"] = 3;
  CHECK_THROWS_AS(ExperimentSpec::from_json(j), ConfigError);
  j = good;
  j["kind"] = "quantum";
  CHECK_THROWS_AS(ExperimentSpec::from_json(j), ConfigError);
  j = good;
  j["svi"]["sampling"] = "sometimes";
  CHECK_THROWS_AS(ExperimentSpec::from_json(j), ConfigError);
  j = good;
  j["ranks"] = {-1};
  CHECK_THROWS_AS(ExperimentSpec::from_json(j), ConfigError);
  j = good;
  j["svi"]["N"] = "many";
  CHECK_THROWS_AS(ExperimentSpec::from_json(j), ConfigError);
  CHECK_THROWS_AS(ExperimentSpec::from_json(json::array()), ConfigError);
  CHECK_THROWS_AS(ExperimentSpec::from_json(json{{"kind", "planner-report"}}), ConfigError);

  const ExperimentSpec s = ExperimentSpec::from_json(good);
  CHECK(s.ranks.size() == 5);
  CHECK(s.svi.samples == 200);
  CHECK(s.svi.iterations == 20);
  CHECK(s.svi.eigen_samples == 40);
  CHECK(s.svi.log_stride == 5);
}

TEST_CASE("gaussian sweep writes every artifact") {
  const auto dir = test::scratch_dir("cli_sweep");
  const ExperimentSpec spec = ExperimentSpec::from_json(gaussian_doc(dir));
  const ExperimentOutcome out = run_experiment(spec);
  CHECK(out.exit_code == 0);
  CHECK(out.metric == "kl");
  CHECK(out.cells.size() == 25);
  for (const auto& c : out.cells) CHECK(c.ok);
  REQUIRE(out.summary.size() == 5);
  for (Eigen::Index r : {0, 1, 2, 4, 8}) {
    for (int s = 0; s < 5; ++s) {
      const auto stem = "r" + std::to_string(r) + "_s" + std::to_string(s);
      CHECK(fs::exists(dir / ("trace_" + stem + ".csv")));
      CHECK(fs::exists(dir / ("model_" + stem + ".json")));
    }
  }
  for (const char* f : {"cells.csv", "summary.csv", "convergence.svg", "baseline.json"})
    CHECK(fs::exists(dir / f));
  CHECK(slurp(dir / "convergence.svg").find("<svg") != std::string::npos);

  // Trace header and round trip.
  std::ifstream tin(dir / "trace_r4_s2.csv");
  std::string header;
  std::getline(tin, header);
  CHECK(header == trace_csv_header(4));
  CHECK(header == "iter,grad_evals,rq_1,rq_2,rq_3,rq_4,kl,frob_err");
  const RunTrace t = RunTrace::read_csv(dir / "trace_r4_s2.csv");
  std::ostringstream again;
  t.write_csv(again, 4);
  CHECK(again.str() == slurp(dir / "trace_r4_s2.csv"));
  CHECK(t.records().front().iter == 0);
  CHECK(t.records().back().iter == 20);
  for (std::size_t i = 1; i < t.records().size(); ++i)
    CHECK(t.records()[i].grad_evals > t.records()[i - 1].grad_evals);

  // Summary interval brackets the mean.
  for (const auto& row : out.summary) {
    CHECK(row.count == 5);
    CHECK(row.ci_low <= row.mean);
    CHECK(row.mean <= row.ci_high);
  }
  // Rank 2 reaches far below rank 1 on a rank-2 target.
  CHECK(out.summary[2].mean < 0.1 * out.summary[1].mean);
}

TEST_CASE("reruns are byte-identical regardless of thread count") {
  const auto a = test::scratch_dir("cli_rerun_a");
  const auto b = test::scratch_dir("cli_rerun_b");
  json doc = gaussian_doc(a);
  doc["ranks"] = {1, 3};
  doc["seeds"] = {7, 8};
  doc["threads"] = 1;
  run_experiment(ExperimentSpec::from_json(doc));
  doc["output_dir"] = b.string();
  doc["threads"] = 3;
  run_experiment(ExperimentSpec::from_json(doc));
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    CHECK_MESSAGE(slurp(e.path()) == slurp(b / name), name.string());
  }
}

TEST_CASE("comparison against the baseline") {
  const auto dir = test::scratch_dir("cli_compare");
  json doc = gaussian_doc(dir);
  doc["ranks"] = {1, 2, 4};
  doc["seeds"] = {0, 1};
  doc["svi"] = {{"N", 200}, {"T", 200}, {"update", "deterministic"}};
  run_experiment(ExperimentSpec::from_json(doc));
  const auto rows = compare_to_baseline(dir, dir / "baseline.json");
  REQUIRE(rows.size() == 6);
  double worst_rank1 = 0.0, best_rank1 = 1e300;
  for (const auto& r : rows) {
    if (r.rank == 1) {
      worst_rank1 = std::max(worst_rank1, r.distance);
      best_rank1 = std::min(best_rank1, r.distance);
    }
  }
  for (const auto& r : rows) {
    if (r.rank >= 2) {
      CHECK(r.distance < 0.1 * best_rank1);
      CHECK(r.log10_distance == "exact (<1e-12)");
    }
  }
  const std::string comparison = slurp(dir / "comparison.csv");
  CHECK(comparison.rfind("model,rank,seed,frob_distance,log10_frob_distance\n", 0) == 0);
  std::ifstream sin(dir / "summary.csv");
  std::string header;
  std::getline(sin, header);
  CHECK(header == "rank,metric,count,mean,ci95_low,ci95_high,mean_log10_frob");
  // A second comparison replaces the column instead of appending another.
  compare_to_baseline(dir, dir / "baseline.json");
  std::ifstream sin2(dir / "summary.csv");
  std::getline(sin2, header);
  CHECK(header == "rank,metric,count,mean,ci95_low,ci95_high,mean_log10_frob");

  try {
    compare_to_baseline(dir, dir / "absent.json");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("absent.json") != std::string::npos);
  }
  write_precision_json(dir / "small.json", Matrix::Identity(3, 3));
  CHECK_THROWS_AS(compare_to_baseline(dir, dir / "small.json"), ContractError);
}

TEST_CASE("planner report writes only the plan") {
  const auto dir = test::scratch_dir("cli_plan");
  const json doc{{"kind", "planner-report"},
                 {"output_dir", dir.string()},
                 {"planner", {{"beta", 2.0}, {"d", 1000}, {"Pi", 1e8}, {"nu_kl", 0.01}}}};
  const ExperimentOutcome out = run_experiment(ExperimentSpec::from_json(doc));
  CHECK(out.exit_code == 0);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  const json plan = json::parse(slurp(dir / "plan.json"));
  CHECK(plan.is_object());
  CHECK_FALSE(plan.empty());
}

TEST_CASE("summaries use a Student-t interval") {
  const SummaryRow r = summarize(3, {1.0, 2.0, 3.0});
  CHECK(r.mean == doctest::Approx(2.0));
  // t_{0.975, 2} = 4.302653; se = 1 / sqrt(3).
  CHECK(r.ci_high - r.mean == doctest::Approx(4.302653 / std::sqrt(3.0)).epsilon(1e-6));
  const SummaryRow one = summarize(1, {5.0});
  CHECK(one.ci_low == 5.0);
  CHECK(one.ci_high == 5.0);
  CHECK(std::isnan(summarize(0, {}).mean));
}

TEST_CASE("linear UQ sweep uses the Frobenius metric") {
  const auto dir = test::scratch_dir("cli_linear");
  const json doc{{"kind", "linear-uq"},
                 {"target", {{"d", 5}, {"n", 2000}, {"rotation_seed", 3}, {"seed", 1}}},
                 {"ranks", {5}},
                 {"seeds", {0}},
                 {"output_dir", dir.string()},
                 {"svi", {{"N", 100}, {"T", 10}, {"M", 20}}}};
  const ExperimentOutcome out = run_experiment(ExperimentSpec::from_json(doc));
  CHECK(out.exit_code == 0);
  CHECK(out.metric == "frob_err");
  REQUIRE(out.cells.size() == 1);
  CHECK(out.cells[0].final_metric.has_value());
}

TEST_CASE("command-line exit codes") {
  const auto dir = test::scratch_dir("cli_exit");
  json doc = gaussian_doc(dir / "run");
  doc["ranks"] = {1, 2};
  doc["seeds"] = {0};
  write_json(dir / "good.json", doc);
  CHECK(run_cli("run " + (dir / "good.json").string(), dir / "log1") == 0);
  CHECK(slurp(dir / "log1").find("cells: 2 ok, 0 failed") != std::string::npos);

  CHECK(run_cli("compare " + (dir / "run").string() + " " + (dir / "run/baseline.json").string(),
                dir / "log_cmp") == 0);
  CHECK(run_cli("compare " + (dir / "run").string() + " " + (dir / "missing.json").string(),
                dir / "log_cmp2") == 3);
  CHECK(slurp(dir / "log_cmp2").find("missing.json") != std::string::npos);

  json bad = doc;
  bad["ranks"] = json::array();
  write_json(dir / "bad.json", bad);
  CHECK(run_cli("run " + (dir / "bad.json").string(), dir / "log2") == 2);
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK(run_cli("run " + (dir / "broken.json").string(), dir / "log3") == 2);
  CHECK(run_cli("run " + (dir / "nothing.json").string(), dir / "log4") == 2);
  CHECK(run_cli("frobnicate", dir / "log5") == 2);
  CHECK(run_cli("", dir / "log6") == 2);

  // A budget too small for any allocation makes every cell fail at run time.
  json infeasible = doc;
  infeasible["output_dir"] = (dir / "run2").string();
  infeasible["budget"] = 1.0;
  write_json(dir / "infeasible.json", infeasible);
  CHECK(run_cli("run " + (dir / "infeasible.json").string(), dir / "log7") == 3);
  CHECK(slurp(dir / "log7").find("failed") != std::string::npos);

  json big_rank = doc;
  big_rank["ranks"] = {101};
  write_json(dir / "big.json", big_rank);
  CHECK(run_cli("run " + (dir / "big.json").string(), dir / "log8") == 2);

  write_json(dir / "plan.json",
             json{{"planner", {{"beta", 0.75}, {"d", 100}, {"Pi", 1e6}, {"nu_kl", 1.0}}}});
  CHECK(run_cli("plan " + (dir / "plan.json").string(), dir / "log9") == 0);
  write_json(dir / "plan_bad.json", json{{"planner", {{"beta", -1.0}, {"d", 100}, {"Pi", 1e6}}}});
  CHECK(run_cli("plan " + (dir / "plan_bad.json").string(), dir / "log10") == 2);
}

TEST_CASE("shipped example configs parse") {
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    ++count;
    CHECK_NOTHROW_MESSAGE(ExperimentSpec::from_file(e.path()), e.path().string());
  }
  CHECK(count >= 6);
}
