#pragma once

// Closed-form rank and budget rules for power-law spectra
// lambda_k = c k^{-beta}. Every asymptotic relation is evaluated with
// proportionality constant 1 unless overridden.

#include <optional>

#include <json.hpp>

namespace lrvi {

struct SpectrumModel {
  double beta = 1.0;  ///< decay exponent, > 1/2
  double scale = 1.0; ///< c
  long dimension = 1; ///< d

  /// Throws DomainError for beta <= 1/2 and ContractError for c <= 0 or d < 1.
  void validate() const;
};

struct PlannerInputs {
  double budget = 1.0;  ///< Pi
  std::optional<double> tolerance_kl;
  std::optional<double> tolerance_uq;
  double alpha = 1.0;
  double lipschitz = 1.0;
  double delta = 0.1;
  std::optional<double> sample_count;  ///< n, UQ rule only
  std::optional<double> norm_scale;    ///< c_x with ||x||^2 <= c_x d, UQ rule only

  double rank_constant = 1.0;    ///< multiplies the raw p* of every rule
  double budget_constant = 1.0;  ///< multiplies Pi_min
};

/// Raw (unrounded) value of the beta > 1 branch of the KL rank rule.
double optimal_rank_kl_above_one(const SpectrumModel& spec, const PlannerInputs& in);
/// Raw value of the 1/2 < beta < 1 branch.
double optimal_rank_kl_below_one(const SpectrumModel& spec, const PlannerInputs& in);

/// Nearest integer (ties up) clamped to [1, d].
long round_rank(double raw, long dimension);

/// The branch matching beta; beta within 1e-9 of 1 uses min{(Pi/d)^{1/4}, d}.
long optimal_rank_kl(const SpectrumModel& spec, const PlannerInputs& in);

/// Budget reaching E1 + E2 <= nu_KL. Throws ConfigError without tolerance_kl.
double min_budget_kl(const SpectrumModel& spec, const PlannerInputs& in);

/// ((n/d^2) (c/c_x)^2 / (2 beta - 1))^{1/(2 beta - 1)}; beta = 1 reports
/// min{n/d^2, d}. Throws ConfigError when n is missing.
long optimal_rank_uq(const SpectrumModel& spec, const PlannerInputs& in);

long combined_rank(const SpectrumModel& spec, const PlannerInputs& in);

/// Approximation-error bound (c/alpha)^2 max{d^{1-2b}/(1-2b), p^{1-2b}/(2b-1)}.
double approximation_error_bound(const SpectrumModel& spec, const PlannerInputs& in, long rank);
/// Optimization-error bound
/// (c/alpha) (pd/Pi)^{1/3} (L/alpha)^{5/3} delta^{-1/6} sum_{k<=p} k^{-beta}, with the
/// harmonic-type sum replaced by its integral bound.
double optimization_error_bound(const SpectrumModel& spec, const PlannerInputs& in, long rank);

/// JSON report {p_star_kl, p_star_uq, p_star, N, T, M, Pi_min}; fields whose
/// inputs are missing are null.
nlohmann::json planner_report(const SpectrumModel& spec, const PlannerInputs& in);

}  // namespace lrvi
