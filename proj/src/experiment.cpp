#include "lrvi/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "lrvi/data.hpp"
#include "lrvi/errors.hpp"
#include "lrvi/oracle.hpp"

namespace lrvi {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": field '" + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(where + ": unknown field '" + it.key() + "'");
  }
}

SviConfig parse_svi(const json& j) {
  reject_unknown(j,
                 {"N", "T", "M", "fd_step", "step_size", "sampling", "update", "expectation_samples",
                  "expectation_seed", "strict_stage2", "init", "log_stride"},
                 "svi");
  SviConfig c;
  c.samples = get_or<Eigen::Index>(j, "N", c.samples);
  c.iterations = get_or<Eigen::Index>(j, "T", c.iterations);
  c.eigen_samples = get_or<Eigen::Index>(j, "M", c.eigen_samples);
  c.fd_step = get_or<double>(j, "fd_step", c.fd_step);
  c.step_size = get_or<double>(j, "step_size", c.step_size);
  const auto sampling = get_or<std::string>(j, "sampling", "fixed_input");
  if (sampling == "fixed_input") c.sampling = SamplingMode::fixed_input;
  else if (sampling == "current_state") c.sampling = SamplingMode::current_state;
  else throw ConfigError("svi.sampling must be fixed_input or current_state");
  const auto update = get_or<std::string>(j, "update", "stochastic");
  if (update == "stochastic") c.update = UpdateMode::stochastic;
  else if (update == "deterministic") c.update = UpdateMode::deterministic;
  else throw ConfigError("svi.update must be stochastic or deterministic");
  const auto init = get_or<std::string>(j, "init", "coordinate");
  if (init == "coordinate") c.init = InitMode::coordinate;
  else if (init == "random") c.init = InitMode::random_orthonormal;
  else throw ConfigError("svi.init must be coordinate or random");
  c.expectation_samples = get_or<Eigen::Index>(j, "expectation_samples", c.expectation_samples);
  c.expectation_seed = get_or<std::uint64_t>(j, "expectation_seed", c.expectation_seed);
  c.strict_stage2_accounting = get_or<bool>(j, "strict_stage2", false);
  c.log_stride = get_or<long>(j, "log_stride", 1);
  return c;
}

// ---------------------------------------------------------------- targets

struct PreparedTarget {
  std::unique_ptr<TargetPosterior> target;
  Diagnostics diag;
  Matrix baseline;
  double baseline_scale = 1.0;
  std::string metric;
};

PreparedTarget prepare_gaussian(const json& t) {
  reject_unknown(t, {"d", "true_rank", "alpha", "eigenvalues", "seed"}, "target");
  SyntheticGaussianSpec s;
  s.dimension = get_or<Eigen::Index>(t, "d", 100);
  s.true_rank = get_or<Eigen::Index>(t, "true_rank", 2);
  s.alpha = get_or<double>(t, "alpha", 1.0);
  s.seed = get_or<std::uint64_t>(t, "seed", 0);
  if (t.contains("eigenvalues")) {
    const json& e = t.at("eigenvalues");
    const auto type = get_or<std::string>(e, "type", "uniform");
    if (type == "uniform") {
      s.eigenvalues = UniformEigenvalues{get_or<double>(e, "lo", 1.0), get_or<double>(e, "hi", 5.0)};
    } else if (type == "power_law") {
      s.eigenvalues = PowerLawEigenvalues{require<double>(e, "beta", "eigenvalues"),
                                          get_or<double>(e, "scale", 1.0)};
    } else if (type == "explicit") {
      s.eigenvalues = ExplicitEigenvalues{require<std::vector<double>>(e, "values", "eigenvalues")};
    } else {
      throw ConfigError("eigenvalues.type must be uniform, power_law or explicit");
    }
  }
  auto target = std::make_unique<GaussianTarget>(gen_gaussian_target(s));
  PreparedTarget out;
  out.diag.oracle = *target;
  out.baseline = target->precision();
  out.diag.reference = out.baseline;
  out.metric = "kl";
  out.target = std::move(target);
  return out;
}

PreparedTarget prepare_logistic(const json& t, const json& oracle) {
  reject_unknown(t,
                 {"csv", "features", "missing", "zscore", "absence_class", "seed", "prior_precision",
                  "center", "rho", "cache_dir"},
                 "target");
  ArrhythmiaConfig cfg;
  cfg.csv_path = require<std::string>(t, "csv", "target");
  cfg.features = get_or<Eigen::Index>(t, "features", 110);
  const auto missing = get_or<std::string>(t, "missing", "median");
  if (missing == "median") cfg.missing = MissingPolicy::median;
  else if (missing == "drop_column") cfg.missing = MissingPolicy::drop_column;
  else throw ConfigError("target.missing must be median or drop_column");
  cfg.zscore = get_or<bool>(t, "zscore", true);
  cfg.absence_class = get_or<int>(t, "absence_class", 1);
  cfg.seed = get_or<std::uint64_t>(t, "seed", 0);
  cfg.prior_precision = get_or<double>(t, "prior_precision", 1.0);
  const auto center = get_or<std::string>(t, "center", "map");
  if (center == "map") cfg.center = CenterPolicy::map;
  else if (center == "prior_mean") cfg.center = CenterPolicy::prior_mean;
  else throw ConfigError("target.center must be map or prior_mean");
  cfg.rho = get_or<double>(t, "rho", 0.5);
  if (t.contains("cache_dir")) cfg.cache_dir = require<std::string>(t, "cache_dir", "target");

  ArrhythmiaData data = load_arrhythmia(cfg);
  auto target = std::make_unique<LogisticTarget>(std::move(data.target));

  reject_unknown(oracle, {"damping", "tolerance", "max_iterations", "samples", "seed", "fd_step"},
                 "oracle");
  FixedPointOptions fp;
  fp.damping = get_or<double>(oracle, "damping", fp.damping);
  fp.tolerance = get_or<double>(oracle, "tolerance", 1e-6);
  fp.max_iterations = get_or<int>(oracle, "max_iterations", fp.max_iterations);
  fp.samples = get_or<Eigen::Index>(oracle, "samples", 2000);
  fp.seed = get_or<std::uint64_t>(oracle, "seed", fp.seed);
  fp.fd_step = get_or<double>(oracle, "fd_step", fp.fd_step);

  PreparedTarget out;
  out.baseline = fixed_point_precision(*target, fp).precision;
  out.diag.reference = out.baseline;
  out.diag.readout = out.baseline;
  out.metric = "frob_err";
  out.target = std::move(target);
  return out;
}

PreparedTarget prepare_linear(const json& t) {
  reject_unknown(t, {"d", "n", "covariance_spectrum", "rotation_seed", "norm_bound", "seed"}, "target");
  const auto d = get_or<Eigen::Index>(t, "d", 10);
  const auto n = require<Eigen::Index>(t, "n", "target");
  Vector spectrum(d);
  if (t.contains("covariance_spectrum")) {
    const auto s = require<std::vector<double>>(t, "covariance_spectrum", "target");
    if (static_cast<Eigen::Index>(s.size()) != d)
      throw ConfigError("target.covariance_spectrum must have d entries");
    for (Eigen::Index k = 0; k < d; ++k) spectrum(k) = s[static_cast<std::size_t>(k)];
  } else {
    for (Eigen::Index k = 0; k < d; ++k) spectrum(k) = 10.0 * std::pow(0.75, static_cast<double>(k));
  }
  Matrix rotation = Matrix::Identity(d, d);
  if (t.contains("rotation_seed")) {
    Rng rng(require<std::uint64_t>(t, "rotation_seed", "target"));
    rotation = random_orthonormal(d, d, rng);
  }
  const Matrix covariance = rotation * spectrum.asDiagonal() * rotation.transpose();
  std::optional<double> bound;
  if (t.contains("norm_bound")) bound = require<double>(t, "norm_bound", "target");
  auto target = std::make_unique<LinearRegressionTarget>(gen_linear_regression_data(
      d, n, 0.5 * (covariance + covariance.transpose()), bound, get_or<std::uint64_t>(t, "seed", 0)));

  PreparedTarget out;
  out.baseline = covariance;
  out.baseline_scale = 1.0 / static_cast<double>(n);
  out.diag.reference = covariance;
  out.diag.reference_scale = out.baseline_scale;
  out.diag.readout = target->gram();
  out.metric = "frob_err";
  out.target = std::move(target);
  return out;
}

PreparedTarget prepare(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case ExperimentKind::gaussian_synthetic: return prepare_gaussian(spec.target);
    case ExperimentKind::logistic_arrhythmia: return prepare_logistic(spec.target, spec.oracle);
    case ExperimentKind::linear_uq: return prepare_linear(spec.target);
    case ExperimentKind::planner_report: break;
  }
  throw ConfigError("planner-report experiments have no target");
}

// ---------------------------------------------------------------- cells

std::string cell_stem(Eigen::Index rank, std::uint64_t seed) {
  return "r" + std::to_string(rank) + "_s" + std::to_string(seed);
}

struct CellResult {
  CellOutcome outcome;
  std::optional<RunTrace> trace;
};

CellResult run_cell(const ExperimentSpec& spec, const PreparedTarget& prepared, Eigen::Index rank,
                    std::uint64_t seed) {
  CellResult res;
  res.outcome.rank = rank;
  res.outcome.seed = seed;
  try {
    const TargetPosterior& target = *prepared.target;
    const Eigen::Index d = target.dimension();
    const RegularityConstants& reg = target.regularity();
    SviConfig cfg = spec.svi;
    cfg.rank = rank;
    cfg.seed = seed;
    const Eigen::Index rounds = spec.algorithm == LogisticAlgorithm::gauss ? 1 : spec.rounds;
    if (spec.budget && rank >= 1) {
      const BudgetPlan plan = allocate_budget(*spec.budget / static_cast<double>(rounds), rank, d,
                                              reg.alpha, reg.lipschitz, spec.delta);
      cfg.samples = plan.samples;
      cfg.iterations = plan.iterations;
      cfg.eigen_samples = plan.eigen_samples;
    }
    if (spec.scale_samples_with_rank) cfg.samples *= std::max<Eigen::Index>(1, rank);

    const Precision input = Precision::identity(d, reg.alpha);
    SviResult fit = [&]() -> SviResult {
      if (rank == 0) return fit_mean_field(target, cfg, prepared.diag);
      switch (spec.algorithm) {
        case LogisticAlgorithm::gauss: return svi_gauss(target, input, cfg, prepared.diag);
        case LogisticAlgorithm::tracking: cfg.sampling = SamplingMode::current_state; [[fallthrough]];
        case LogisticAlgorithm::general:
          return svi_general(target, OuterLoopConfig{spec.rounds, cfg}, prepared.diag);
      }
      throw ConfigError("unknown algorithm");
    }();

    const std::string stem = cell_stem(rank, seed);
    fit.trace.write_csv(spec.output_dir / ("trace_" + stem + ".csv"), rank);
    {
      std::ofstream m(spec.output_dir / ("model_" + stem + ".json"));
      m << fit.model.to_json().dump(1) << '\n';
    }
    const TraceRecord& last = fit.trace.records().back();
    res.outcome.final_metric = prepared.metric == "kl" ? last.kl : last.frob_err;
    res.outcome.ok = true;
    if (!fit.trace.warnings().empty()) res.outcome.message = fit.trace.warnings().front();
    res.trace = std::move(fit.trace);
  } catch (const std::exception& e) {
    res.outcome.ok = false;
    res.outcome.message = e.what();
  }
  return res;
}

unsigned worker_count(const ExperimentSpec& spec, std::size_t cells) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SVI_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = static_cast<unsigned>(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SVI_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  if (spec.threads) n = *spec.threads;
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(n, cells)));
}

std::string csv_escape(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

}  // namespace

// ---------------------------------------------------------------- spec

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::gaussian_synthetic: return "gaussian-synthetic";
    case ExperimentKind::logistic_arrhythmia: return "logistic-arrhythmia";
    case ExperimentKind::linear_uq: return "linear-uq";
    case ExperimentKind::planner_report: return "planner-report";
  }
  return "?";
}

ExperimentSpec ExperimentSpec::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("experiment spec must be a JSON object");
  reject_unknown(doc,
                 {"kind", "target", "ranks", "seeds", "output_dir", "svi", "budget", "delta",
                  "scale_samples_with_rank", "algorithm", "rounds", "oracle", "planner", "threads"},
                 "spec");
  ExperimentSpec s;
  const auto kind = require<std::string>(doc, "kind", "spec");
  if (kind == "gaussian-synthetic") s.kind = ExperimentKind::gaussian_synthetic;
  else if (kind == "logistic-arrhythmia") s.kind = ExperimentKind::logistic_arrhythmia;
  else if (kind == "linear-uq") s.kind = ExperimentKind::linear_uq;
  else if (kind == "planner-report") s.kind = ExperimentKind::planner_report;
  else throw ConfigError("spec: unknown kind '" + kind + "'");

  s.output_dir = get_or<std::string>(doc, "output_dir", "svi_out");
  if (doc.contains("planner")) s.planner = doc.at("planner");
  if (doc.contains("threads")) s.threads = require<unsigned>(doc, "threads", "spec");
  if (s.kind == ExperimentKind::planner_report) {
    if (!s.planner) throw ConfigError("planner-report spec needs a 'planner' section");
    parse_planner(*s.planner);
    return s;
  }

  s.target = get_or<json>(doc, "target", json::object());
  s.ranks = get_or<std::vector<Eigen::Index>>(doc, "ranks", {});
  s.seeds = get_or<std::vector<std::uint64_t>>(doc, "seeds", {0});
  if (s.ranks.empty()) throw ConfigError("spec: ranks list must not be empty");
  if (s.seeds.empty()) throw ConfigError("spec: at least one seed is required");
  for (auto r : s.ranks)
    if (r < 0) throw ConfigError("spec: ranks must be >= 0");
  s.svi = parse_svi(get_or<json>(doc, "svi", json::object()));
  if (doc.contains("budget")) s.budget = require<double>(doc, "budget", "spec");
  s.delta = get_or<double>(doc, "delta", 0.1);
  s.scale_samples_with_rank = get_or<bool>(doc, "scale_samples_with_rank", false);
  const auto algo = get_or<std::string>(doc, "algorithm", "gauss");
  if (algo == "gauss") s.algorithm = LogisticAlgorithm::gauss;
  else if (algo == "general") s.algorithm = LogisticAlgorithm::general;
  else if (algo == "tracking") s.algorithm = LogisticAlgorithm::tracking;
  else throw ConfigError("spec: algorithm must be gauss, general or tracking");
  s.rounds = get_or<Eigen::Index>(doc, "rounds", 1);
  if (s.rounds < 1) throw ConfigError("spec: rounds must be >= 1");
  s.oracle = get_or<json>(doc, "oracle", json::object());
  return s;
}

ExperimentSpec ExperimentSpec::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("spec " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

std::pair<SpectrumModel, PlannerInputs> parse_planner(const json& j) {
  reject_unknown(j, {"beta", "c", "d", "Pi", "nu_kl", "nu_uq", "alpha", "L", "delta", "n", "c_x"},
                 "planner");
  SpectrumModel spec;
  spec.beta = require<double>(j, "beta", "planner");
  spec.scale = get_or<double>(j, "c", 1.0);
  spec.dimension = require<long>(j, "d", "planner");
  PlannerInputs in;
  in.budget = require<double>(j, "Pi", "planner");
  if (j.contains("nu_kl")) in.tolerance_kl = require<double>(j, "nu_kl", "planner");
  if (j.contains("nu_uq")) in.tolerance_uq = require<double>(j, "nu_uq", "planner");
  in.alpha = get_or<double>(j, "alpha", 1.0);
  in.lipschitz = get_or<double>(j, "L", 1.0);
  in.delta = get_or<double>(j, "delta", 0.1);
  if (j.contains("n")) in.sample_count = require<double>(j, "n", "planner");
  if (j.contains("c_x")) in.norm_scale = require<double>(j, "c_x", "planner");
  try {
    spec.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return {spec, in};
}

SummaryRow summarize(Eigen::Index rank, const std::vector<double>& values) {
  SummaryRow row;
  row.rank = rank;
  row.count = values.size();
  if (values.empty()) {
    row.mean = row.ci_low = row.ci_high = std::nan("");
    return row;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  row.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) {
    row.ci_low = row.ci_high = row.mean;
    return row;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - row.mean) * (v - row.mean);
  const double n = static_cast<double>(values.size());
  const double se = std::sqrt(ss / (n - 1.0) / n);
  const boost::math::students_t dist(n - 1.0);
  const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
  row.ci_low = row.mean - q * se;
  row.ci_high = row.mean + q * se;
  return row;
}

ExperimentOutcome run_experiment(const ExperimentSpec& spec) {
  std::filesystem::create_directories(spec.output_dir);
  ExperimentOutcome outcome;

  if (spec.kind == ExperimentKind::planner_report) {
    const auto [model, inputs] = parse_planner(*spec.planner);
    std::ofstream out(spec.output_dir / "plan.json");
    out << planner_report(model, inputs).dump(1) << '\n';
    return outcome;
  }

  const PreparedTarget prepared = prepare(spec);
  const Eigen::Index d = prepared.target->dimension();
  for (auto r : spec.ranks)
    if (r > d) throw ConfigError("spec: rank " + std::to_string(r) + " exceeds d = " + std::to_string(d));
  outcome.metric = prepared.metric;

  {
    json base = precision_to_json(prepared.baseline);
    base["scale"] = prepared.baseline_scale;
    base["kind"] = to_string(spec.kind);
    std::ofstream out(spec.output_dir / "baseline.json");
    out << base.dump(1) << '\n';
  }

  std::vector<std::pair<Eigen::Index, std::uint64_t>> cells;
  for (auto r : spec.ranks)
    for (auto s : spec.seeds) cells.emplace_back(r, s);
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++)
      results[i] = run_cell(spec, prepared, cells[i].first, cells[i].second);
  };
  const unsigned workers = worker_count(spec, cells.size());
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::size_t failures = 0;
  {
    std::ofstream out(spec.output_dir / "cells.csv");
    out << "rank,seed,status,final_" << prepared.metric << ",message\n";
    for (const auto& r : results) {
      const auto& c = r.outcome;
      failures += c.ok ? 0 : 1;
      out << c.rank << ',' << c.seed << ',' << (c.ok ? "ok" : "failed") << ','
          << (c.final_metric ? fmt(*c.final_metric) : "") << ',' << csv_escape(c.message) << '\n';
      outcome.cells.push_back(c);
    }
  }

  // Summary and plot, ranks in the order given.
  std::vector<Eigen::Index> ranks;
  for (auto r : spec.ranks)
    if (std::find(ranks.begin(), ranks.end(), r) == ranks.end()) ranks.push_back(r);
  std::vector<PlotSeries> series;
  {
    std::ofstream out(spec.output_dir / "summary.csv");
    out << "rank,metric,count,mean,ci95_low,ci95_high\n";
    for (auto rank : ranks) {
      std::vector<double> finals;
      std::vector<const RunTrace*> traces;
      for (const auto& r : results) {
        if (r.outcome.rank != rank || !r.outcome.ok) continue;
        if (r.outcome.final_metric) finals.push_back(*r.outcome.final_metric);
        traces.push_back(&*r.trace);
      }
      const SummaryRow row = summarize(rank, finals);
      outcome.summary.push_back(row);
      out << rank << ',' << prepared.metric << ',' << row.count << ',' << fmt(row.mean) << ','
          << fmt(row.ci_low) << ',' << fmt(row.ci_high) << '\n';

      if (traces.empty()) continue;
      PlotSeries ps;
      ps.label = rank == 0 ? "mean-field" : "rank " + std::to_string(rank);
      const auto& first = traces.front()->records();
      for (std::size_t i = 0; i < first.size(); ++i) {
        double acc = 0.0;
        std::size_t cnt = 0;
        for (const RunTrace* t : traces) {
          if (i >= t->records().size()) continue;
          const auto& rec = t->records()[i];
          const auto v = prepared.metric == "kl" ? rec.kl : rec.frob_err;
          if (!v) continue;
          acc += std::log10(std::max(*v, 1e-16));
          ++cnt;
        }
        if (cnt == 0) continue;
        ps.x.push_back(static_cast<double>(first[i].grad_evals));
        ps.y.push_back(acc / static_cast<double>(cnt));
      }
      series.push_back(std::move(ps));
    }
  }
  {
    std::ofstream out(spec.output_dir / "convergence.svg");
    out << render_svg(series, "gradient evaluations", "log10 " + prepared.metric);
  }
  outcome.exit_code = failures == results.size() ? 3 : 0;
  return outcome;
}

// ---------------------------------------------------------------- comparison

std::vector<ComparisonRow> compare_to_baseline(const std::filesystem::path& run_dir,
                                               const std::filesystem::path& baseline) {
  if (!std::filesystem::exists(baseline))
    throw Error("baseline file not found: expected " + baseline.string());
  if (!std::filesystem::is_directory(run_dir))
    throw Error("run directory not found: " + run_dir.string());
  json base_doc;
  {
    std::ifstream in(baseline);
    try {
      in >> base_doc;
    } catch (const json::exception& e) {
      throw ConfigError("baseline " + baseline.string() + ": " + e.what());
    }
  }
  const Matrix reference = precision_from_json(base_doc);
  const double scale = get_or<double>(base_doc, "scale", 1.0);

  const std::regex pattern(R"(model_r(\d+)_s(\d+)\.json)");
  std::vector<ComparisonRow> rows;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, pattern)) continue;
    std::ifstream in(entry.path());
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw ConfigError(name + ": " + e.what());
    }
    const LowRankGaussian q = LowRankGaussian::from_json(doc);
    if (q.dimension() != reference.rows())
      throw ContractError("compare: " + name + " has dimension " + std::to_string(q.dimension()) +
                          " but the baseline has " + std::to_string(reference.rows()));
    ComparisonRow row;
    row.model_file = name;
    row.rank = std::stol(m[1].str());
    row.seed = std::stoull(m[2].str());
    row.distance = frobenius_precision_error(q, reference, scale);
    if (row.distance < 1e-12) {
      row.log10_distance = "exact (<1e-12)";
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", std::log10(row.distance));
      row.log10_distance = buf;
    }
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    return a.rank != b.rank ? a.rank < b.rank : a.seed < b.seed;
  });

  {
    std::ofstream out(run_dir / "comparison.csv");
    out << "model,rank,seed,frob_distance,log10_frob_distance\n";
    for (const auto& r : rows)
      out << r.model_file << ',' << r.rank << ',' << r.seed << ',' << fmt(r.distance) << ','
          << r.log10_distance << '\n';
  }

  const auto summary_path = run_dir / "summary.csv";
  if (std::filesystem::exists(summary_path)) {
    std::map<Eigen::Index, std::pair<double, std::size_t>> per_rank;
    for (const auto& r : rows) {
      auto& acc = per_rank[r.rank];
      acc.first += std::log10(std::max(r.distance, 1e-12));
      acc.second += 1;
    }
    std::ifstream in(summary_path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    in.close();
    const std::string column = "mean_log10_frob";
    std::ofstream out(summary_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string l = lines[i];
      // Drop a column added by a previous comparison.
      if (lines[0].size() >= column.size() &&
          lines[0].compare(lines[0].size() - column.size(), column.size(), column) == 0) {
        l = l.substr(0, l.rfind(','));
      }
      if (i == 0) {
        out << l << ',' << column << '\n';
        continue;
      }
      const Eigen::Index rank = std::stol(l.substr(0, l.find(',')));
      const auto it = per_rank.find(rank);
      out << l << ',';
      if (it != per_rank.end()) out << fmt(it->second.first / static_cast<double>(it->second.second));
      out << '\n';
    }
  }
  return rows;
}

// ---------------------------------------------------------------- SVG

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& x_label,
                       const std::string& y_label) {
  constexpr double width = 720, height = 480, left = 70, right = 160, top = 20, bottom = 50;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
    << top + ph << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    o << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
      << std::scientific << xv << std::fixed << "</text>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << yv
      << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
    << x_label << "</text>\n";
  o << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << top + ph / 2 << ")\">" << y_label << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* c = colors[i % 10];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) o << sx(s.x[k]) << ',' << sy(s.y[k]) << ' ';
    o << "\"/>\n";
    const double ly = top + 16.0 * static_cast<double>(i + 1);
    o << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 30
      << "\" y2=\"" << ly << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << left + pw + 36 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace lrvi
