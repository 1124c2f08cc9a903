#pragma once

// Two-stage stochastic variational inference for the rank-p family:
// stage 1 recovers the eigenspace with a stochastic power method, stage 2
// reads the eigenvalues off gradient differences. The outer loop re-runs
// both stages with the previous fit as the sampling precision.

#include <cstdint>
#include <functional>
#include <optional>

#include "lrvi/linalg.hpp"
#include "lrvi/lowrank_gaussian.hpp"
#include "lrvi/target.hpp"
#include "lrvi/trace.hpp"

namespace lrvi {

/// Which precision the samples of both stages are drawn from.
enum class SamplingMode {
  fixed_input,    ///< the input Omega handed to svi_gauss, held fixed
  current_state,  ///< alpha I + U U^T built from the current iterate
};

enum class UpdateMode {
  stochastic,     ///< Monte-Carlo update matrix from N gradient samples
  deterministic,  ///< exact expected Hessian substituted for the sampled average
};

enum class InitMode { coordinate, random_orthonormal };

struct SviConfig {
  Eigen::Index rank = 1;              ///< p
  Eigen::Index samples = 1000;        ///< N, draws per stage-1 iteration
  Eigen::Index iterations = 50;       ///< T
  Eigen::Index eigen_samples = 1000;  ///< M, shared draws of the eigenvalue readout
  double fd_step = 1e-3;              ///< Delta
  double step_size = 1.0;             ///< h, only used by precond_sgd_step
  std::uint64_t seed = 0;
  SamplingMode sampling = SamplingMode::fixed_input;
  UpdateMode update = UpdateMode::stochastic;
  InitMode init = InitMode::coordinate;

  /// Deterministic mode on non-Gaussian targets: draws and seed used by
  /// expected_hessian_mc. The seed is shared by every call so successive
  /// outer rounds see common random numbers.
  Eigen::Index expectation_samples = 10000;
  std::uint64_t expectation_seed = 0;

  /// Charge 2 M p gradient calls for stage 2 instead of the 2 M convention.
  bool strict_stage2_accounting = false;
  /// Log every stride-th stage-1 iteration (the last one is always logged).
  long log_stride = 1;

  /// Called with (t, U^(t)) after every QR step, t = 1..T.
  std::function<void(long, const Matrix&)> observer;

  /// Throws ConfigError on p > d, N, T, M < 1, Delta <= 0 or stride < 1.
  void validate(Eigen::Index dimension) const;
};

struct OuterLoopConfig {
  Eigen::Index rounds = 1;  ///< K
  SviConfig inner;
  void validate(Eigen::Index dimension) const;
};

/// Optional oracle information recorded in the trace. None of it is charged
/// to the gradient budget.
struct Diagnostics {
  /// Enables Rayleigh quotients, KL and the initial-overlap diagnostic.
  std::optional<GaussianTarget> oracle;
  /// Enables frob_err = ||reference - scale * Omega||_F.
  std::optional<Matrix> reference;
  double reference_scale = 1.0;
  /// Matrix used to read provisional eigenvalues u^T H u - alpha at logged
  /// stage-1 iterations. Defaults to the oracle precision when one is set.
  std::optional<Matrix> readout;

  bool empty() const { return !oracle && !reference; }
};

struct SviResult {
  LowRankGaussian model;
  RunTrace trace;
};

/// Unnormalized power-method update (1/N) sum_j grad_j (theta_j - mu)^T Omega U.
/// grads and centered hold one sample per row.
Matrix power_method_step(const Matrix& grads, const Matrix& centered, const Precision& omega,
                         const Matrix& basis);

/// Unnormalized preconditioned-SGD update
/// U - h U Lambda + (h/N) sum_j grad_j (theta_j - mu)^T U Lambda.
Matrix precond_sgd_step(const Matrix& grads, const Matrix& centered, const Matrix& basis,
                        const Vector& lambda, double step_size);

/// Stage 1: T power-method steps from init's basis (or the coordinate /
/// random basis chosen by cfg.init when init has the wrong rank). Throws
/// DegenerateIterateError when QR loses rank.
Matrix stage1_eigvectors(const TargetPosterior& target, const Matrix& init,
                         const Precision& input_omega, const SviConfig& cfg,
                         RunTrace* trace = nullptr, const Diagnostics& diag = {});

/// Stage 2: lambda_k = mean_j u_k^T (grad(theta_j + D u_k) - grad(theta_j - D u_k)) / 2D - alpha
/// with one shared batch of M draws from `sampling`. Values are clamped at
/// -alpha + 1e-6 alpha with a warning in the trace.
Vector stage2_eigvalues(const TargetPosterior& target, const Matrix& basis,
                        const Precision& sampling, const SviConfig& cfg, RunTrace* trace = nullptr);

/// Stage 1 then stage 2 against the fixed input precision (or the current
/// state, per cfg.sampling). Columns are ordered by descending eigenvalue.
SviResult svi_gauss(const TargetPosterior& target, const Precision& input_omega,
                    const SviConfig& cfg, const Diagnostics& diag = {});
SviResult svi_gauss(const TargetPosterior& target, const SviConfig& cfg,
                    const Diagnostics& diag = {});

/// K rounds of svi_gauss, each sampling from the previous fit
/// (Omega_0 = alpha I). Requires the target to declare rho.
SviResult svi_general(const TargetPosterior& target, const OuterLoopConfig& cfg,
                      const Diagnostics& diag = {});

/// Diagonal fit: U = I_d with per-coordinate stage-2 readout and no stage 1.
SviResult fit_mean_field(const TargetPosterior& target, const SviConfig& cfg,
                         const Diagnostics& diag = {});

// ---------------------------------------------------------------- budget

struct AllocationConstants {
  double samples = 1.0;
  double iterations = 1.0;
  double eigen_samples = 1.0;
};

struct BudgetPlan {
  double budget = 0.0;
  Eigen::Index samples = 0;        ///< N
  Eigen::Index iterations = 0;     ///< T
  Eigen::Index eigen_samples = 0;  ///< M
  double samples_raw = 0.0;
  double iterations_raw = 0.0;
  double eigen_samples_raw = 0.0;

  long long cost() const { return static_cast<long long>(samples * iterations + 2 * eigen_samples); }
};

/// Raw allocation with the given constants: N ~ Pi^{2/3} (pd)^{1/3} delta^{-1/6} (L/alpha)^{2/3},
/// T ~ Pi^{1/3} delta^{1/6} (pd)^{-1/3} (alpha/L)^{2/3},
/// M ~ Pi^{2/3} p^{1/3} d^{-2/3} (alpha/L)^{4/3} delta^{1/3}.
/// Integers: T = floor, M = floor, N = min(floor N_raw, floor((Pi - 2M) / T)).
/// Throws BudgetInfeasibleError (carrying the smallest feasible Pi) when any is < 1.
BudgetPlan allocate_budget(double budget, Eigen::Index rank, Eigen::Index dimension, double alpha,
                           double lipschitz, double delta, const AllocationConstants& c = {});

/// Smallest integer budget for which allocate_budget succeeds.
double minimal_feasible_budget(Eigen::Index rank, Eigen::Index dimension, double alpha,
                               double lipschitz, double delta, const AllocationConstants& c = {});

enum class BudgetMode { gauss, general };

struct BudgetRunOptions {
  BudgetMode mode = BudgetMode::gauss;
  Eigen::Index rounds = 1;  ///< K for BudgetMode::general; the budget is split evenly
  double delta = 0.1;       ///< failure probability in the allocation rule
  std::uint64_t seed = 0;
  double fd_step = 1e-3;
  AllocationConstants constants;
};

/// Plans (N, T, M) from the target's alpha and L and runs the chosen
/// algorithm; the trace never exceeds the budget.
SviResult run_with_budget(const TargetPosterior& target, Eigen::Index rank, double budget,
                          const BudgetRunOptions& options = {}, const Diagnostics& diag = {});

}  // namespace lrvi
