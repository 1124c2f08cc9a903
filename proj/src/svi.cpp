#include "lrvi/svi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "lrvi/errors.hpp"

namespace lrvi {

namespace {

constexpr double kEigenFloor = 1e-6;  // lambda_k >= -alpha + kEigenFloor * alpha

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix shifted_rows(const Matrix& centered, const Vector& mean) {
  Matrix out = centered;
  out.rowwise() += mean.transpose();
  return out;
}

Matrix checked_gradients(const TargetPosterior& target, const Matrix& thetas) {
  Matrix g = target.gradient_rows(thetas);
  if (!g.allFinite()) throw NumericError("non-finite gradient evaluation");
  return g;
}

/// Exact expected Hessian under N(center, omega^{-1}): the constant Hessian for
/// quadratic targets, a Monte-Carlo estimate otherwise.
Matrix expected_update_matrix(const TargetPosterior& target, const Precision& omega,
                              const SviConfig& cfg) {
  if (const auto* g = dynamic_cast<const GaussianTarget*>(&target)) return g->precision();
  if (const auto* lr = dynamic_cast<const LinearRegressionTarget*>(&target)) return lr->gram();
  return expected_hessian_mc(target, omega.to_dense(), cfg.expectation_samples,
                             cfg.expectation_seed, cfg.fd_step);
}

bool hessian_is_constant(const TargetPosterior& target) {
  return dynamic_cast<const GaussianTarget*>(&target) != nullptr ||
         dynamic_cast<const LinearRegressionTarget*>(&target) != nullptr;
}

Vector clamp_eigenvalues(Vector lambda, double alpha, RunTrace* trace) {
  const double floor = -alpha + kEigenFloor * alpha;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    if (lambda(k) < floor) {
      if (trace)
        trace->warn("eigenvalue estimate " + std::to_string(k + 1) + " = " +
                    std::to_string(lambda(k)) + " clamped to " + std::to_string(floor));
      lambda(k) = floor;
    }
  }
  return lambda;
}

Matrix initial_basis(Eigen::Index d, const SviConfig& cfg) {
  if (cfg.init == InitMode::random_orthonormal) {
    Rng rng(mix_seed(cfg.seed, 2));
    return random_orthonormal(d, cfg.rank, rng);
  }
  return coordinate_basis(d, cfg.rank);
}

/// Records a trace row for the state (U, lambda). lambda is provisional
/// during stage 1 and final after stage 2.
void log_state(RunTrace& trace, long iter, const Vector& mean, double alpha, const Matrix& basis,
               const Vector& lambda, const Diagnostics& diag) {
  std::optional<Vector> rq;
  std::optional<double> kl;
  std::optional<double> frob;
  if (diag.oracle && basis.cols() > 0) rq = rayleigh_quotients(basis, *diag.oracle);
  if (!diag.empty()) {
    const LowRankGaussian q(mean, alpha, basis, lambda);
    if (diag.oracle) kl = kl_gaussian(q, *diag.oracle);
    if (diag.reference) frob = frobenius_precision_error(q, *diag.reference, diag.reference_scale);
  }
  if (!trace.records().empty() && trace.records().back().grad_evals == trace.grad_evals()) return;
  trace.record(iter, std::move(rq), kl, frob);
}

Vector provisional_eigenvalues(const Matrix& basis, double alpha, const Diagnostics& diag) {
  Vector lambda = Vector::Ones(basis.cols());
  const Matrix* h = diag.readout ? &*diag.readout : nullptr;
  Matrix oracle_precision;
  if (!h && diag.oracle) {
    oracle_precision = diag.oracle->precision();
    h = &oracle_precision;
  }
  if (!h) return lambda;
  const Matrix hu = *h * basis;
  for (Eigen::Index k = 0; k < basis.cols(); ++k) {
    lambda(k) = basis.col(k).dot(hu.col(k)) - alpha;
  }
  return clamp_eigenvalues(lambda, alpha, nullptr);
}

double initial_overlap(const Matrix& init, const GaussianTarget& oracle) {
  const Eigen::Index p = std::min<Eigen::Index>(init.cols(), oracle.basis().cols());
  if (p == 0) return 0.0;
  const Matrix m = oracle.basis().leftCols(p).transpose() * init;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues().minCoeff();
}

struct Stage1Options {
  RunTrace* trace = nullptr;
  const Diagnostics* diag = nullptr;
  long iter_offset = 0;
  bool log_initial = true;
  /// Precomputed deterministic update matrix for the fixed-input case.
  const Matrix* expectation = nullptr;
};

Matrix run_stage1(const TargetPosterior& target, Matrix basis, const Precision& input_omega,
                  const SviConfig& cfg, const Stage1Options& opt) {
  const Eigen::Index p = basis.cols();
  const double alpha = target.regularity().alpha;
  const Vector mean = target.center();
  const Diagnostics empty_diag;
  const Diagnostics& diag = opt.diag ? *opt.diag : empty_diag;

  auto log = [&](long t, const Matrix& u) {
    if (!opt.trace) return;
    log_state(*opt.trace, opt.iter_offset + t, mean, alpha, u,
              provisional_eigenvalues(u, alpha, diag), diag);
  };

  if (opt.trace && opt.log_initial) {
    if (diag.oracle) opt.trace->initial_overlap = initial_overlap(basis, *diag.oracle);
    log(0, basis);
  }
  if (p == 0) return basis;

  const Vector ones = Vector::Ones(p);
  const bool fixed = cfg.sampling == SamplingMode::fixed_input;
  const bool deterministic = cfg.update == UpdateMode::deterministic;

  std::optional<Matrix> cached_h;
  if (opt.expectation) cached_h = *opt.expectation;
  else if (deterministic && (fixed || hessian_is_constant(target)))
    cached_h = expected_update_matrix(target, input_omega, cfg);

  Rng rng(cfg.seed);
  for (long t = 1; t <= cfg.iterations; ++t) {
    Matrix next;
    if (deterministic) {
      if (cached_h) {
        next = *cached_h * basis;
      } else {
        next = expected_update_matrix(target, Precision::low_rank(alpha, basis, ones), cfg) * basis;
      }
    } else {
      const Precision omega = fixed ? input_omega : Precision::low_rank(alpha, basis, ones);
      const Matrix centered = omega.sample_centered(cfg.samples, rng);
      const Matrix grads = checked_gradients(target, shifted_rows(centered, mean));
      next = power_method_step(grads, centered, omega, basis);
    }
    if (opt.trace) opt.trace->charge(cfg.samples);

    Matrix q;
    if (!next.allFinite() || !qr_orthonormalize(next, q)) {
      throw DegenerateIterateError(static_cast<int>(t),
                                   "stage 1: update lost rank at iteration " + std::to_string(t));
    }
    basis = std::move(q);
    if (cfg.observer) cfg.observer(t, basis);
    if (t % cfg.log_stride == 0 || t == cfg.iterations) log(t, basis);
  }
  return basis;
}

Vector stage2_impl(const TargetPosterior& target, const Matrix& basis, const Precision& sampling,
                   const SviConfig& cfg, RunTrace* trace, const Matrix* expectation) {
  const Eigen::Index p = basis.cols();
  const double alpha = target.regularity().alpha;
  if (basis.rows() != target.dimension())
    throw ContractError("stage2_eigvalues: basis has wrong row count");
  if (p == 0) return Vector(0);
  if (cfg.eigen_samples < 1) throw ConfigError("stage2_eigvalues: M must be >= 1");
  if (!(cfg.fd_step > 0.0)) throw ConfigError("stage2_eigvalues: Delta must be > 0");

  Vector lambda(p);
  if (cfg.update == UpdateMode::deterministic) {
    const Matrix hu =
        (expectation ? *expectation : expected_update_matrix(target, sampling, cfg)) * basis;
    for (Eigen::Index k = 0; k < p; ++k) lambda(k) = basis.col(k).dot(hu.col(k)) - alpha;
  } else {
    Rng rng(mix_seed(cfg.seed, 1));
    const Matrix thetas = shifted_rows(sampling.sample_centered(cfg.eigen_samples, rng),
                                       target.center());
    const double inv = 1.0 / (2.0 * cfg.fd_step);
    for (Eigen::Index k = 0; k < p; ++k) {
      const Vector u = basis.col(k);
      Matrix plus = thetas;
      plus.rowwise() += cfg.fd_step * u.transpose();
      Matrix minus = thetas;
      minus.rowwise() -= cfg.fd_step * u.transpose();
      const Matrix diff = checked_gradients(target, plus) - checked_gradients(target, minus);
      lambda(k) = (diff * u).mean() * inv - alpha;
    }
  }
  if (!lambda.allFinite()) throw NumericError("stage 2: non-finite eigenvalue estimate");
  if (trace) {
    const long long m = static_cast<long long>(cfg.eigen_samples);
    trace->charge(cfg.strict_stage2_accounting ? 2 * m * static_cast<long long>(p) : 2 * m);
  }
  return clamp_eigenvalues(std::move(lambda), alpha, trace);
}

LowRankGaussian svi_gauss_into(const TargetPosterior& target, const Precision& input_omega,
                               const SviConfig& cfg, const Diagnostics& diag, RunTrace& trace,
                               long iter_offset, bool log_initial) {
  const Eigen::Index d = target.dimension();
  cfg.validate(d);
  if (input_omega.dimension() != d) throw ContractError("svi_gauss: input precision has wrong dimension");
  const double alpha = target.regularity().alpha;
  const Vector mean = target.center();

  std::optional<Matrix> expectation;
  if (cfg.rank > 0 && cfg.update == UpdateMode::deterministic &&
      cfg.sampling == SamplingMode::fixed_input)
    expectation = expected_update_matrix(target, input_omega, cfg);

  Stage1Options opt{&trace, &diag, iter_offset, log_initial, expectation ? &*expectation : nullptr};
  Matrix basis = run_stage1(target, initial_basis(d, cfg), input_omega, cfg, opt);
  if (cfg.rank == 0) {
    LowRankGaussian q = LowRankGaussian::isotropic(mean, alpha);
    trace.final_state = q;
    return q;
  }

  const Precision sampling = cfg.sampling == SamplingMode::fixed_input
                                 ? input_omega
                                 : Precision::low_rank(alpha, basis, Vector::Ones(cfg.rank));
  Vector lambda = stage2_impl(target, basis, sampling, cfg, &trace,
                              expectation ? &*expectation : nullptr);

  // Descending eigenvalue order, ties resolved by the lower column index.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(cfg.rank));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return lambda(a) > lambda(b); });
  Matrix sorted_basis(d, cfg.rank);
  Vector sorted_lambda(cfg.rank);
  for (Eigen::Index k = 0; k < cfg.rank; ++k) {
    sorted_basis.col(k) = basis.col(order[static_cast<std::size_t>(k)]);
    sorted_lambda(k) = lambda(order[static_cast<std::size_t>(k)]);
  }

  LowRankGaussian q(mean, alpha, std::move(sorted_basis), std::move(sorted_lambda));
  log_state(trace, iter_offset + cfg.iterations, mean, alpha, q.basis(), q.lambda(), diag);
  trace.final_state = q;
  return q;
}

}  // namespace

void SviConfig::validate(Eigen::Index dimension) const {
  if (rank < 0 || rank > dimension)
    throw ConfigError("SviConfig: rank must lie in [0, d], got " + std::to_string(rank));
  if (samples < 1) throw ConfigError("SviConfig: N must be >= 1");
  if (iterations < 1) throw ConfigError("SviConfig: T must be >= 1");
  if (eigen_samples < 1) throw ConfigError("SviConfig: M must be >= 1");
  if (!(fd_step > 0.0) || !std::isfinite(fd_step)) throw ConfigError("SviConfig: Delta must be > 0");
  if (log_stride < 1) throw ConfigError("SviConfig: log stride must be >= 1");
  if (update == UpdateMode::deterministic && expectation_samples < 1)
    throw ConfigError("SviConfig: expectation samples must be >= 1");
}

void OuterLoopConfig::validate(Eigen::Index dimension) const {
  if (rounds < 1) throw ConfigError("OuterLoopConfig: K must be >= 1");
  inner.validate(dimension);
}

Matrix power_method_step(const Matrix& grads, const Matrix& centered, const Precision& omega,
                         const Matrix& basis) {
  const double n = static_cast<double>(grads.rows());
  const Matrix projected = centered * omega.apply(basis);  // N x p
  return grads.transpose() * projected / n;
}

Matrix precond_sgd_step(const Matrix& grads, const Matrix& centered, const Matrix& basis,
                        const Vector& lambda, double step_size) {
  const double n = static_cast<double>(grads.rows());
  const Matrix ul = basis * lambda.asDiagonal();
  return basis - step_size * ul + (step_size / n) * (grads.transpose() * (centered * ul));
}

Matrix stage1_eigvectors(const TargetPosterior& target, const Matrix& init,
                         const Precision& input_omega, const SviConfig& cfg, RunTrace* trace,
                         const Diagnostics& diag) {
  const Eigen::Index d = target.dimension();
  cfg.validate(d);
  Matrix basis = init;
  if (basis.rows() != d || basis.cols() != cfg.rank) basis = initial_basis(d, cfg);
  if (orthonormality_error(basis) > 1e-8)
    throw ContractError("stage1_eigvectors: initial basis is not semi-orthonormal");
  return run_stage1(target, std::move(basis), input_omega, cfg, {trace, &diag, 0, true});
}

Vector stage2_eigvalues(const TargetPosterior& target, const Matrix& basis,
                        const Precision& sampling, const SviConfig& cfg, RunTrace* trace) {
  return stage2_impl(target, basis, sampling, cfg, trace, nullptr);
}

SviResult svi_gauss(const TargetPosterior& target, const Precision& input_omega,
                    const SviConfig& cfg, const Diagnostics& diag) {
  RunTrace trace;
  LowRankGaussian q = svi_gauss_into(target, input_omega, cfg, diag, trace, 0, true);
  return {std::move(q), std::move(trace)};
}

SviResult svi_gauss(const TargetPosterior& target, const SviConfig& cfg, const Diagnostics& diag) {
  return svi_gauss(target, Precision::identity(target.dimension()), cfg, diag);
}

SviResult svi_general(const TargetPosterior& target, const OuterLoopConfig& cfg,
                      const Diagnostics& diag) {
  const Eigen::Index d = target.dimension();
  cfg.validate(d);
  const RegularityConstants& reg = target.regularity();
  if (!reg.rho) throw ContractError("svi_general: target must declare its contraction rho");

  RunTrace trace;
  Precision omega = Precision::identity(d, reg.alpha);
  Matrix previous = omega.to_dense();
  std::optional<LowRankGaussian> q;
  std::optional<double> last_distance;
  int increases = 0;
  bool flagged = false;
  for (Eigen::Index k = 0; k < cfg.rounds; ++k) {
    SviConfig inner = cfg.inner;
    inner.seed = k == 0 ? cfg.inner.seed : mix_seed(cfg.inner.seed, 16 + static_cast<std::uint64_t>(k));
    q = svi_gauss_into(target, omega, inner, diag, trace, static_cast<long>(k) * inner.iterations,
                       k == 0);
    omega = q->precision();
    Matrix current = q->dense_precision();
    const double distance = (current - previous).norm();
    if (last_distance && distance > *last_distance) {
      if (++increases >= 3 && !flagged) {
        trace.warn("outer loop not contracting: ||Omega_k+1 - Omega_k||_F grew for 3 rounds (round " +
                   std::to_string(k + 1) + ")");
        flagged = true;
      }
    } else {
      increases = 0;
    }
    last_distance = distance;
    previous = std::move(current);
  }
  trace.final_state = *q;
  return {std::move(*q), std::move(trace)};
}

SviResult fit_mean_field(const TargetPosterior& target, const SviConfig& cfg,
                         const Diagnostics& diag) {
  const Eigen::Index d = target.dimension();
  SviConfig eff = cfg;
  eff.rank = d;
  eff.validate(d);
  const double alpha = target.regularity().alpha;
  const Vector mean = target.center();

  RunTrace trace;
  const Diagnostics no_rq{std::nullopt, diag.reference, diag.reference_scale, std::nullopt};
  // KL for the diagonal model is recorded but per-vector quotients are not:
  // the sweep treats this model as rank 0.
  auto record = [&](long iter, const LowRankGaussian& q) {
    std::optional<double> kl;
    std::optional<double> frob;
    if (diag.oracle) kl = kl_gaussian(q, *diag.oracle);
    if (no_rq.reference) frob = frobenius_precision_error(q, *no_rq.reference, no_rq.reference_scale);
    trace.record(iter, std::nullopt, kl, frob);
  };
  record(0, LowRankGaussian::isotropic(mean, alpha));

  const Matrix basis = Matrix::Identity(d, d);
  const Vector lambda = stage2_eigvalues(target, basis, Precision::identity(d), eff, &trace);
  LowRankGaussian q(mean, alpha, basis, lambda);
  record(1, q);
  trace.final_state = q;
  return {std::move(q), std::move(trace)};
}

// ---------------------------------------------------------------- budget

namespace {

struct RawAllocation {
  double n, t, m;
};

RawAllocation raw_allocation(double budget, double p, double d, double alpha, double lipschitz,
                             double delta, const AllocationConstants& c) {
  const double ratio = lipschitz / alpha;
  RawAllocation r;
  r.n = c.samples * std::pow(budget, 2.0 / 3.0) * std::cbrt(p * d) * std::pow(delta, -1.0 / 6.0) *
        std::pow(ratio, 2.0 / 3.0);
  r.t = c.iterations * std::cbrt(budget) * std::pow(delta, 1.0 / 6.0) / std::cbrt(p * d) *
        std::pow(ratio, -2.0 / 3.0);
  r.m = c.eigen_samples * std::pow(budget, 2.0 / 3.0) * std::cbrt(p) * std::pow(d, -2.0 / 3.0) *
        std::pow(ratio, -4.0 / 3.0) * std::cbrt(delta);
  return r;
}

std::optional<BudgetPlan> try_allocate(double budget, Eigen::Index rank, Eigen::Index dimension,
                                       double alpha, double lipschitz, double delta,
                                       const AllocationConstants& c) {
  const RawAllocation raw = raw_allocation(budget, static_cast<double>(rank),
                                           static_cast<double>(dimension), alpha, lipschitz, delta, c);
  BudgetPlan plan;
  plan.budget = budget;
  plan.samples_raw = raw.n;
  plan.iterations_raw = raw.t;
  plan.eigen_samples_raw = raw.m;
  const double t = std::floor(raw.t);
  const double m = std::floor(raw.m);
  if (t < 1.0 || m < 1.0) return std::nullopt;
  const double n = std::min(std::floor(raw.n), std::floor((budget - 2.0 * m) / t));
  if (n < 1.0) return std::nullopt;
  plan.samples = static_cast<Eigen::Index>(n);
  plan.iterations = static_cast<Eigen::Index>(t);
  plan.eigen_samples = static_cast<Eigen::Index>(m);
  return plan;
}

void check_allocation_inputs(Eigen::Index rank, Eigen::Index dimension, double alpha,
                             double lipschitz, double delta) {
  if (rank < 1 || rank > dimension) throw ContractError("allocate_budget: rank must lie in [1, d]");
  if (!(alpha > 0.0) || !(lipschitz >= alpha))
    throw ContractError("allocate_budget: need 0 < alpha <= L");
  if (!(delta > 0.0 && delta < 1.0)) throw ContractError("allocate_budget: delta must lie in (0,1)");
}

}  // namespace

double minimal_feasible_budget(Eigen::Index rank, Eigen::Index dimension, double alpha,
                               double lipschitz, double delta, const AllocationConstants& c) {
  check_allocation_inputs(rank, dimension, alpha, lipschitz, delta);
  auto feasible = [&](double b) {
    return try_allocate(b, rank, dimension, alpha, lipschitz, delta, c).has_value();
  };
  // N = T = M = 1 costs 3, so anything below is infeasible.
  double lo = 2.0;
  double hi = 4.0;
  while (!feasible(hi)) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw DomainError("minimal_feasible_budget: no feasible budget");
  }
  if (feasible(3.0)) return 3.0;
  while (hi - lo > std::max(1.0, 1e-12 * hi)) {
    const double mid = std::floor(0.5 * (lo + hi));
    if (mid <= lo || mid >= hi) break;
    (feasible(mid) ? hi : lo) = mid;
  }
  return hi;
}

BudgetPlan allocate_budget(double budget, Eigen::Index rank, Eigen::Index dimension, double alpha,
                           double lipschitz, double delta, const AllocationConstants& c) {
  check_allocation_inputs(rank, dimension, alpha, lipschitz, delta);
  if (!(budget > 0.0)) throw ContractError("allocate_budget: budget must be > 0");
  if (auto plan = try_allocate(budget, rank, dimension, alpha, lipschitz, delta, c)) {
    if (plan->cost() > budget) throw Error("allocate_budget: internal accounting error");
    return *plan;
  }
  const double minimal = minimal_feasible_budget(rank, dimension, alpha, lipschitz, delta, c);
  throw BudgetInfeasibleError(minimal, "budget " + std::to_string(budget) +
                                           " cannot fund N, T, M >= 1; minimal feasible budget is " +
                                           std::to_string(minimal));
}

SviResult run_with_budget(const TargetPosterior& target, Eigen::Index rank, double budget,
                          const BudgetRunOptions& options, const Diagnostics& diag) {
  const Eigen::Index d = target.dimension();
  const RegularityConstants& reg = target.regularity();
  const Eigen::Index rounds = options.mode == BudgetMode::general ? options.rounds : 1;
  if (rounds < 1) throw ConfigError("run_with_budget: rounds must be >= 1");
  const double per_round = budget / static_cast<double>(rounds);
  const BudgetPlan plan =
      allocate_budget(per_round, rank, d, reg.alpha, reg.lipschitz, options.delta, options.constants);

  SviConfig cfg;
  cfg.rank = rank;
  cfg.samples = plan.samples;
  cfg.iterations = plan.iterations;
  cfg.eigen_samples = plan.eigen_samples;
  cfg.fd_step = options.fd_step;
  cfg.seed = options.seed;
  cfg.log_stride = std::max<long>(1, static_cast<long>(plan.iterations / 200));

  SviResult result = options.mode == BudgetMode::gauss
                         ? svi_gauss(target, cfg, diag)
                         : svi_general(target, OuterLoopConfig{rounds, cfg}, diag);
  if (static_cast<double>(result.trace.grad_evals()) > budget)
    throw Error("run_with_budget: trace exceeded the budget");
  return result;
}

}  // namespace lrvi
