// Acceptance suite: one PASS/FAIL line per criterion. Every criterion also
// has a wall-clock limit, which is part of its pass condition.
//
//   acceptance          run all criteria
//   acceptance 3 7      run a subset

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lrvi/data.hpp"
#include "lrvi/errors.hpp"
#include "lrvi/lowrank_gaussian.hpp"
#include "lrvi/oracle.hpp"
#include "lrvi/planner.hpp"
#include "lrvi/svi.hpp"
#include "support.hpp"

using namespace lrvi;

namespace {

// ---------------------------------------------------------------- tolerances

constexpr double kOrthoTol = 1e-10;         // 1
constexpr double kSpanTol = 1e-10;          // 2
constexpr double kRayleighRel = 0.05;       // 3
constexpr int kRayleighSeedsNeeded = 9;     // 3, out of 10
constexpr double kStage2Tol = 1e-9;         // 4
constexpr double kMonotoneRel = 0.10;       // 6(a)
constexpr double kFloorFactor = 3.0;        // 6(b)
constexpr double kBudgetFraction = 0.10;    // 6(c)
constexpr double kRatioLo = 2.5;            // 7
constexpr double kRatioHi = 6.0;            // 7
constexpr double kFixedPointRel = 0.05;     // 8
constexpr double kLinearInD = 1e-12;        // 9

struct Verdict {
  bool ok = true;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Verdict()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

GaussianTarget spectrum_target(Eigen::Index d, const std::vector<double>& excess, double alpha,
                               std::uint64_t seed) {
  const auto r = static_cast<Eigen::Index>(excess.size());
  Vector s(r);
  for (Eigen::Index k = 0; k < r; ++k) s(k) = excess[static_cast<std::size_t>(k)];
  return GaussianTarget::from_spectrum(alpha, test::orthonormal_columns(d, r, seed), s);
}

// ---------------------------------------------------------------- 1

Verdict orthonormality() {
  const GaussianTarget t = spectrum_target(50, {9.0, 7.0, 5.0, 4.0, 3.0, 2.0, 1.5, 1.0}, 1.0, 43);
  SviConfig cfg;
  cfg.rank = 8;
  cfg.samples = 64;
  cfg.iterations = 200;
  int calls = 0;
  double worst = 0.0;
  cfg.observer = [&](long, const Matrix& u) {
    ++calls;
    worst = std::max(worst, orthonormality_error(u));
  };
  stage1_eigvectors(t, coordinate_basis(50, 8), Precision::identity(50), cfg);
  return {calls == 200 && worst < kOrthoTol,
          "iterates=" + std::to_string(calls) + " max ||U^T U - I||_F=" + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------- 2

Verdict update_equivalence() {
  double worst = 0.0;
  bool ranks_ok = true;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    Rng rng(1000 + inst);
    const Eigen::Index d = 3 + static_cast<Eigen::Index>(inst % 8);
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(inst % static_cast<std::uint64_t>(d - 1));
    const double alpha = rng.uniform(0.3, 2.0);
    const GaussianTarget t = GaussianTarget::from_precision(
        test::random_spd(d, 2000 + inst, 0.1) + alpha * Matrix::Identity(d, d), alpha);
    Matrix power = coordinate_basis(d, p);
    Matrix sgd = power;
    const Vector ones = Vector::Ones(p);
    for (int step = 0; step < 5; ++step) {
      // Both forms see the same draws from alpha I + U U^T.
      const Precision omega = Precision::low_rank(alpha, power, ones);
      const Matrix x = omega.sample_centered(32, rng);
      const Matrix g = t.gradient_rows(x);
      Matrix a, b;
      ranks_ok = ranks_ok && qr_orthonormalize(power_method_step(g, x, omega, power), a);
      ranks_ok = ranks_ok && qr_orthonormalize(precond_sgd_step(g, x, sgd, ones, 1.0), b);
      if (!ranks_ok) break;
      worst = std::max(worst, projector_distance(a, b));
      power = a;
      sgd = b;
    }
  }
  return {ranks_ok && worst < kSpanTol,
          "20 instances x 5 steps, max projector distance=" + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------- 3

Verdict eigenspace_recovery() {
  const GaussianTarget t = spectrum_target(20, {8.0, 4.0, 2.0}, 1.0, 3);
  const DenseSpectrum exact = dense_eig(t.precision());
  int good = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SviConfig cfg;
    cfg.rank = 3;
    cfg.samples = 4096;
    cfg.iterations = 60;
    cfg.seed = seed;
    const Matrix u = stage1_eigvectors(t, coordinate_basis(20, 3), Precision::identity(20), cfg);
    const Matrix h = t.precision();
    bool ok = true;
    for (Eigen::Index k = 0; k < 3; ++k) {
      const double rq = u.col(k).dot(h * u.col(k));
      const double lam = exact.values(k) - 1.0;
      const double rel = std::abs(rq - exact.values(k)) / lam;
      worst = std::max(worst, rel);
      ok = ok && rel <= kRayleighRel;
    }
    good += ok ? 1 : 0;
  }
  return {good >= kRayleighSeedsNeeded, std::to_string(good) + "/10 seeds within 5%, worst rel=" +
                                            fmt("%.4f", worst)};
}

// ---------------------------------------------------------------- 4

Verdict stage2_exactness() {
  std::mt19937_64 eng(404);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(u01(eng) * 12);
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(u01(eng) * static_cast<double>(d));
    const double alpha = 0.1 + 2.0 * u01(eng);
    const Matrix omega =
        test::random_spd(d, 5000 + static_cast<std::uint64_t>(i), 0.0) + alpha * Matrix::Identity(d, d);
    const GaussianTarget t = GaussianTarget::from_precision(omega, alpha);
    const Matrix basis = test::orthonormal_columns(d, p, 6000 + static_cast<std::uint64_t>(i));
    SviConfig cfg;
    cfg.rank = p;
    cfg.eigen_samples = 1;
    cfg.fd_step = std::pow(10.0, -4.0 * u01(eng));  // in (1e-4, 1]
    cfg.seed = static_cast<std::uint64_t>(i);
    const Vector lam = stage2_eigvalues(t, basis, Precision::identity(d, alpha), cfg);
    for (Eigen::Index k = 0; k < p; ++k)
      worst = std::max(worst, std::abs(lam(k) - (basis.col(k).dot(omega * basis.col(k)) - alpha)));
  }
  return {worst < kStage2Tol, "50 instances, max |lambda_k - (u^T Omega u - alpha)|=" + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------- 5

Verdict fd_hessian_bound() {
  // psi = theta^4 / 12: psi'' = theta^2, psi''' = 2 theta, so on [0.9, 1.1]
  // the local third-derivative bound is 2.2.
  const double l_hess = 2.2;
  RegularityConstants reg;
  reg.alpha = 1e-3;
  reg.lipschitz = 10.0;
  reg.hessian_lipschitz = l_hess;
  const FunctionTarget q(
      1, [](const Vector& t) { return std::pow(t(0), 4) / 12.0; },
      [](const Vector& t) { return Vector::Constant(1, std::pow(t(0), 3) / 3.0); }, reg);
  const Vector theta = Vector::Ones(1), dir = Vector::Ones(1);
  bool ok = true;
  double prev = -1.0, prev_delta = 0.0;
  std::ostringstream detail;
  for (double delta : {1e-1, 1e-2, 1e-3}) {
    const double err = std::abs(hessian_vector_fd(q, theta, dir, delta)(0) - 1.0);
    ok = ok && err <= l_hess * delta;
    if (prev >= 0.0) ok = ok && err <= prev * (delta / prev_delta);
    detail << "D=" << delta << " err=" << fmt("%.3g", err) << " ";
    prev = err;
    prev_delta = delta;
  }
  return {ok, detail.str()};
}

// ---------------------------------------------------------------- 6

struct SweepCell {
  double final_kl = 0.0;
  std::vector<TraceRecord> records;
  long long total = 0;
};

SweepCell sweep_cell(const GaussianTarget& t, Eigen::Index rank, std::uint64_t seed) {
  SviConfig cfg;
  cfg.rank = rank;
  cfg.samples = 200 * rank;
  cfg.iterations = 60;
  cfg.eigen_samples = 100;
  cfg.log_stride = 6;
  cfg.seed = seed;
  Diagnostics diag;
  diag.oracle = t;
  const SviResult r = svi_gauss(t, cfg, diag);
  SweepCell c;
  c.records = r.trace.records();
  c.final_kl = *c.records.back().kl;
  c.total = r.trace.grad_evals();
  return c;
}

double kl_at_budget(const SweepCell& c, double budget) {
  double kl = *c.records.front().kl;
  for (const auto& rec : c.records)
    if (static_cast<double>(rec.grad_evals) <= budget && rec.kl) kl = *rec.kl;
  return kl;
}

Verdict tradeoff() {
  constexpr int kSeeds = 5;
  bool a_ok = true, b_ok = true, c_ok = true;
  std::ostringstream detail;
  for (Eigen::Index p_star : {2, 64}) {
    const GaussianTarget t =
        gen_gaussian_target(SyntheticGaussianSpec{100, p_star, 1.0, UniformEigenvalues{}, 0});
    std::vector<Eigen::Index> ranks{1, 2, 4};
    if (std::find(ranks.begin(), ranks.end(), p_star) == ranks.end()) ranks.push_back(p_star);
    std::sort(ranks.begin(), ranks.end());

    std::vector<std::vector<SweepCell>> cells(ranks.size());
    std::vector<double> mean(ranks.size(), 0.0);
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      for (int s = 0; s < kSeeds; ++s) {
        cells[i].push_back(sweep_cell(t, ranks[i], static_cast<std::uint64_t>(s)));
        mean[i] += cells[i].back().final_kl / kSeeds;
      }
    }
    detail << "[p*=" << p_star << " mean KL:";
    for (std::size_t i = 0; i < ranks.size(); ++i) detail << " r" << ranks[i] << "=" << fmt("%.4g", mean[i]);

    // (a) nonincreasing up to p*.
    for (std::size_t i = 1; i < ranks.size() && ranks[i] <= p_star; ++i) {
      if (mean[i] > mean[i - 1] * (1.0 + kMonotoneRel)) {
        a_ok = false;
        detail << " (a) violated at r" << ranks[i];
      }
    }
    // (b) within 3x the exact floor for p >= p*.
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      if (ranks[i] < p_star) continue;
      Vector excess = Vector::Zero(100);
      excess.head(p_star) = t.spectrum();
      const double floor = kl_truncation_floor_excess(excess, t.alpha(), ranks[i]).exact;
      detail << " floor(r" << ranks[i] << ")=" << fmt("%.3g", floor);
      if (mean[i] > kFloorFactor * floor) b_ok = false;
    }
    // (c) crossover at 10% of the rank-p* budget.
    if (p_star == 64) {
      const std::size_t top = ranks.size() - 1;
      int wins = 0;
      for (int s = 0; s < kSeeds; ++s) {
        const double budget = kBudgetFraction * static_cast<double>(cells[top][s].total);
        const double kl_top = kl_at_budget(cells[top][s], budget);
        double best_low = INFINITY;
        for (std::size_t i = 0; i < top; ++i) best_low = std::min(best_low, kl_at_budget(cells[i][s], budget));
        wins += best_low < kl_top ? 1 : 0;
        if (s == 0)
          detail << " at 10% budget: r64=" << fmt("%.4g", kl_top) << " best r<64=" << fmt("%.4g", best_low);
      }
      detail << " crossover seeds=" << wins << "/" << kSeeds;
      c_ok = wins * 2 > kSeeds;
    }
    detail << "]";
  }
  detail << " (a)=" << (a_ok ? "ok" : "FAIL") << " (b)=" << (b_ok ? "ok" : "FAIL")
         << " (c)=" << (c_ok ? "ok" : "FAIL");
  return {a_ok && b_ok && c_ok, detail.str()};
}

// ---------------------------------------------------------------- 7

Verdict statistical_floor() {
  constexpr Eigen::Index d = 10;
  Vector spectrum(d);
  for (Eigen::Index k = 0; k < d; ++k) spectrum(k) = 10.0 * std::pow(0.75, static_cast<double>(k));
  Rng rot(77);
  const Matrix rotation = random_orthonormal(d, d, rot);
  const Matrix cov = rotation * spectrum.asDiagonal() * rotation.transpose();
  const Matrix covariance = 0.5 * (cov + cov.transpose());

  const std::vector<Eigen::Index> ns{1000, 4000, 16000};
  std::vector<double> mse;
  for (Eigen::Index n : ns) {
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const LinearRegressionTarget t =
          gen_linear_regression_data(d, n, covariance, std::nullopt, 100 * seed + 1);
      SviConfig cfg;
      cfg.rank = d;
      cfg.samples = 50000;
      cfg.iterations = 40;
      cfg.eigen_samples = 100;
      cfg.log_stride = 40;
      cfg.seed = seed;
      Diagnostics diag;
      diag.reference = covariance;
      diag.reference_scale = 1.0 / static_cast<double>(n);
      diag.readout = t.gram();
      const SviResult r = svi_gauss(t, cfg, diag);
      const double e = *r.trace.records().back().frob_err;
      acc += e * e / 10.0;
    }
    mse.push_back(acc);
  }
  const double r1 = mse[0] / mse[1], r2 = mse[1] / mse[2];
  const bool ok = mse[0] > mse[1] && mse[1] > mse[2] && r1 >= kRatioLo && r1 <= kRatioHi &&
                  r2 >= kRatioLo && r2 <= kRatioHi;
  return {ok, "mse(n)=" + fmt("%.4g", mse[0]) + "," + fmt("%.4g", mse[1]) + "," + fmt("%.4g", mse[2]) +
                  " ratios=" + fmt("%.3f", r1) + "," + fmt("%.3f", r2)};
}

// ---------------------------------------------------------------- 8

Verdict outer_loop() {
  Rng rng(101);
  const Matrix x = rng.normal_matrix(200, 5) / std::sqrt(5.0);
  Vector y(200);
  for (Eigen::Index i = 0; i < 200; ++i) y(i) = rng.uniform(0.0, 1.0) < 0.4 ? 1.0 : 0.0;
  LogisticTarget::Options o;
  o.prior_precision = 1.0;
  o.rho = 0.5;
  const LogisticTarget t(x, y, o);

  SviConfig inner;
  inner.rank = 5;
  inner.iterations = 300;
  inner.update = UpdateMode::deterministic;
  inner.expectation_samples = 20000;
  inner.expectation_seed = 7;
  const SviResult r = svi_general(t, OuterLoopConfig{15, inner});

  FixedPointOptions fp;
  fp.samples = 20000;
  fp.seed = 7;
  fp.damping = 1.0;
  fp.tolerance = 1e-8;
  const FixedPointResult oracle = fixed_point_precision(t, fp);
  const double rel = (r.model.dense_precision() - oracle.precision).norm() / oracle.precision.norm();
  return {rel < kFixedPointRel, "K=15 relative Frobenius distance=" + fmt("%.3g", rel) +
                                    " (oracle iterations=" + std::to_string(oracle.iterations) + ")"};
}

// ---------------------------------------------------------------- 9

PlannerInputs unit_inputs(double budget) {
  PlannerInputs in;
  in.budget = budget;
  in.alpha = 1.0;
  in.lipschitz = 1.0;
  in.delta = 1.0 - 1e-12;
  return in;
}

Verdict planner() {
  std::ostringstream detail;
  bool ok = true;
  const long kl_rank = optimal_rank_kl({1.0, 1.0, 100}, unit_inputs(1e8));
  ok = ok && kl_rank == 32;
  detail << "p*_KL=" << kl_rank;

  PlannerInputs nu = unit_inputs(1e8);
  nu.tolerance_kl = 0.02;
  const double pi_big = min_budget_kl({10.0, 1.0, 100}, nu);
  nu.tolerance_kl = 0.01;
  const double pi_small = min_budget_kl({10.0, 1.0, 100}, nu);
  const double growth = pi_small / pi_big, expected = std::pow(2.0, 3.0 + 1.0 / 19.0);
  ok = ok && std::abs(growth / expected - 1.0) < 1e-6;
  detail << " Pi(nu/2)/Pi(nu)=" << fmt("%.6f", growth);

  PlannerInputs uq;
  uq.norm_scale = 1.0;
  uq.sample_count = 1e6;
  const long uq_big = optimal_rank_uq({1.0, 1.0, 100}, uq);
  uq.sample_count = 1e4;
  const long uq_small = optimal_rank_uq({1.0, 1.0, 100}, uq);
  ok = ok && uq_big == 100 && uq_small == 1;
  detail << " p*_UQ=" << uq_big << "," << uq_small;

  PlannerInputs both = unit_inputs(1e8);
  both.sample_count = 1e4;
  both.norm_scale = 1.0;
  const long comb = combined_rank({1.0, 1.0, 100}, both);
  ok = ok && comb == 1;
  detail << " combined=" << comb;

  std::mt19937_64 eng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int i = 0; i < 100; ++i) {
    SpectrumModel s{0.55 + 3.0 * u(eng), std::pow(10.0, -1.0 + 3.0 * u(eng)),
                    1 + static_cast<long>(500 * u(eng))};
    PlannerInputs in;
    in.budget = std::pow(10.0, 2.0 + 10.0 * u(eng));
    in.alpha = std::pow(10.0, -1.0 + 2.0 * u(eng));
    in.lipschitz = in.alpha * (1.0 + 20.0 * u(eng));
    in.delta = 0.01 + 0.5 * u(eng);
    in.tolerance_kl = std::pow(10.0, -3.0 + 3.0 * u(eng));
    in.sample_count = std::pow(10.0, 1.0 + 7.0 * u(eng));
    in.norm_scale = 0.5 + 2.0 * u(eng);

    PlannerInputs more = in;
    more.budget *= 1.0 + 20.0 * u(eng);
    if (optimal_rank_kl(s, more) < optimal_rank_kl(s, in)) ++violations;
    more = in;
    *more.sample_count *= 1.0 + 20.0 * u(eng);
    if (optimal_rank_uq(s, more) < optimal_rank_uq(s, in)) ++violations;
    const double pi = min_budget_kl(s, in);
    more = in;
    *more.tolerance_kl *= 1.0 + u(eng);
    if (!(min_budget_kl(s, more) < pi)) ++violations;
    SpectrumModel wide = s;
    const long factor = 2 + static_cast<long>(5 * u(eng));
    wide.dimension *= factor;
    if (std::abs(min_budget_kl(wide, in) / pi - static_cast<double>(factor)) >
        kLinearInD * static_cast<double>(factor))
      ++violations;
  }
  ok = ok && violations == 0;
  detail << " random-draw violations=" << violations << "/400";
  return {ok, detail.str()};
}

// ---------------------------------------------------------------- 10

Verdict budget_accounting() {
  std::mt19937_64 eng(1010);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int over = 0, ran = 0;
  long long max_used = 0;
  double max_fraction = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Index d = 5 + static_cast<Eigen::Index>(35 * u(eng));
    const Eigen::Index p_star = 1 + static_cast<Eigen::Index>(u(eng) * std::min<double>(6.0, d - 1));
    const Eigen::Index rank = 1 + static_cast<Eigen::Index>(u(eng) * static_cast<double>(std::min<Eigen::Index>(d, 6)));
    const GaussianTarget t = gen_gaussian_target(
        SyntheticGaussianSpec{d, p_star, 0.5 + u(eng), UniformEigenvalues{}, static_cast<std::uint64_t>(i)});
    BudgetRunOptions opt;
    opt.mode = u(eng) < 0.5 ? BudgetMode::gauss : BudgetMode::general;
    opt.rounds = opt.mode == BudgetMode::general ? 1 + static_cast<Eigen::Index>(3 * u(eng)) : 1;
    opt.delta = 0.05 + 0.2 * u(eng);
    opt.seed = static_cast<std::uint64_t>(i);
    const RegularityConstants& reg = t.regularity();
    const double pi_min =
        minimal_feasible_budget(rank, d, reg.alpha, reg.lipschitz, opt.delta) * static_cast<double>(opt.rounds);
    const double budget = std::floor(pi_min * std::pow(10.0, 0.1 + 1.9 * u(eng)));
    const SviResult r = run_with_budget(t, rank, budget, opt);
    ++ran;
    for (const auto& rec : r.trace.records())
      if (static_cast<double>(rec.grad_evals) > budget) ++over;
    if (static_cast<double>(r.trace.grad_evals()) > budget) ++over;
    max_used = std::max(max_used, r.trace.grad_evals());
    max_fraction = std::max(max_fraction, static_cast<double>(r.trace.grad_evals()) / budget);
  }
  return {over == 0 && ran == 50, std::to_string(ran) + " configs, rows over budget=" + std::to_string(over) +
                                      " max used/Pi=" + fmt("%.4f", max_fraction)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "orthonormality of stage-1 iterates", 5, orthonormality},
      {2, "power-method and preconditioned-SGD forms agree", 5, update_equivalence},
      {3, "eigenspace recovery", 30, eigenspace_recovery},
      {4, "stage-2 exactness on quadratics", 2, stage2_exactness},
      {5, "finite-difference Hessian bound", 1, fd_hessian_bound},
      {6, "rank/budget trade-off", 300, tradeoff},
      {7, "statistical floor in linear UQ", 120, statistical_floor},
      {8, "outer-loop fixed point", 60, outer_loop},
      {9, "planner formulas", 1, planner},
      {10, "budget accounting", 30, budget_accounting},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = v.ok && in_time;
    failures += pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s | %.2f s (limit %.0f s%s)\n", pass ? "PASS" : "FAIL", c.id,
                c.name.c_str(), v.detail.c_str(), secs, c.limit_seconds, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
