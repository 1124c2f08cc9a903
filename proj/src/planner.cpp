#include "lrvi/planner.hpp"

#include <algorithm>
#include <cmath>

#include "lrvi/errors.hpp"
#include "lrvi/svi.hpp"

namespace lrvi {

namespace {

constexpr double kBetaOneWindow = 1e-9;

bool is_beta_one(double beta) { return std::abs(beta - 1.0) <= kBetaOneWindow; }

void validate_inputs(const PlannerInputs& in) {
  if (!(in.budget > 0.0)) throw ContractError("planner: budget must be > 0");
  if (!(in.alpha > 0.0) || !(in.lipschitz > 0.0))
    throw ContractError("planner: alpha and L must be > 0");
  if (!(in.delta > 0.0 && in.delta < 1.0)) throw ContractError("planner: delta must lie in (0,1)");
}

}  // namespace

void SpectrumModel::validate() const {
  if (!(beta > 0.5)) throw DomainError("planner: decay exponent beta must exceed 1/2");
  if (!(scale > 0.0)) throw ContractError("planner: spectrum scale c must be > 0");
  if (dimension < 1) throw ContractError("planner: dimension must be >= 1");
}

double optimal_rank_kl_above_one(const SpectrumModel& spec, const PlannerInputs& in) {
  const double b = spec.beta;
  const double d = static_cast<double>(spec.dimension);
  return in.rank_constant * std::pow(in.budget / d, 1.0 / (6.0 * b - 2.0)) *
         std::pow(spec.scale / in.alpha, 1.0 / (2.0 * b - 2.0 / 3.0)) *
         std::pow(in.alpha / in.lipschitz, 5.0 / (6.0 * b - 2.0)) *
         std::pow(in.delta, 1.0 / (12.0 * b - 4.0));
}

double optimal_rank_kl_below_one(const SpectrumModel& spec, const PlannerInputs& in) {
  const double b = spec.beta;
  const double d = static_cast<double>(spec.dimension);
  return in.rank_constant * std::pow(in.budget / d, 1.0 / (3.0 * b + 1.0)) *
         std::pow(spec.scale / in.alpha, 1.0 / (b + 1.0 / 3.0)) *
         std::pow(in.alpha / in.lipschitz, 5.0 / (3.0 * b + 1.0)) *
         std::pow(in.delta, 1.0 / (6.0 * b + 2.0));
}

long round_rank(double raw, long dimension) {
  if (std::isnan(raw)) throw DomainError("planner: rank rule produced NaN");
  if (raw >= static_cast<double>(dimension)) return dimension;
  const double rounded = std::floor(raw + 0.5);
  return std::clamp(static_cast<long>(rounded), 1L, dimension);
}

long optimal_rank_kl(const SpectrumModel& spec, const PlannerInputs& in) {
  spec.validate();
  validate_inputs(in);
  const double d = static_cast<double>(spec.dimension);
  double raw;
  if (is_beta_one(spec.beta)) {
    raw = std::min(in.rank_constant * std::pow(in.budget / d, 0.25), d);
  } else if (spec.beta > 1.0) {
    raw = optimal_rank_kl_above_one(spec, in);
  } else {
    raw = optimal_rank_kl_below_one(spec, in);
  }
  return round_rank(raw, spec.dimension);
}

double min_budget_kl(const SpectrumModel& spec, const PlannerInputs& in) {
  spec.validate();
  validate_inputs(in);
  if (!in.tolerance_kl) throw ConfigError("min_budget_kl: tolerance nu_KL is required");
  const double nu = *in.tolerance_kl;
  if (!(nu > 0.0)) throw ContractError("min_budget_kl: nu_KL must be > 0");
  const double b = spec.beta;
  const double d = static_cast<double>(spec.dimension);
  const double common = d * std::pow(in.lipschitz / in.alpha, 5.0) / std::sqrt(in.delta);
  const double c_ratio = spec.scale / in.alpha;
  const double g = 2.0 * b - 1.0;
  double value;
  if (b >= 1.0) {
    value = common * std::pow(nu, -3.0 - 1.0 / g) * std::pow(c_ratio, 3.0 + 2.0 / g);
  } else {
    value = common * std::pow(nu, -(3.0 * b + 1.0) / g) * std::pow(c_ratio, 5.0 / g);
  }
  return in.budget_constant * value;
}

long optimal_rank_uq(const SpectrumModel& spec, const PlannerInputs& in) {
  spec.validate();
  if (!in.sample_count) throw ConfigError("optimal_rank_uq: sample count n is required");
  const double n = *in.sample_count;
  const double cx = in.norm_scale.value_or(1.0);
  if (!(n > 0.0) || !(cx > 0.0)) throw ContractError("optimal_rank_uq: n and c_x must be > 0");
  const double d = static_cast<double>(spec.dimension);
  double raw;
  if (is_beta_one(spec.beta)) {
    raw = std::min(in.rank_constant * n / (d * d), d);
  } else {
    const double g = 2.0 * spec.beta - 1.0;
    const double ratio = spec.scale / cx;
    raw = in.rank_constant * std::pow(n / (d * d) * ratio * ratio / g, 1.0 / g);
  }
  return round_rank(raw, spec.dimension);
}

long combined_rank(const SpectrumModel& spec, const PlannerInputs& in) {
  return std::min(optimal_rank_kl(spec, in), optimal_rank_uq(spec, in));
}

double approximation_error_bound(const SpectrumModel& spec, const PlannerInputs& in, long rank) {
  spec.validate();
  const double b = spec.beta;
  const double c2 = std::pow(spec.scale / in.alpha, 2.0);
  const double d = static_cast<double>(spec.dimension);
  const double p = static_cast<double>(rank);
  return c2 * std::max(std::pow(d, 1.0 - 2.0 * b) / (1.0 - 2.0 * b),
                       std::pow(p, 1.0 - 2.0 * b) / (2.0 * b - 1.0));
}

double optimization_error_bound(const SpectrumModel& spec, const PlannerInputs& in, long rank) {
  spec.validate();
  validate_inputs(in);
  const double b = spec.beta;
  const double p = static_cast<double>(rank);
  const double d = static_cast<double>(spec.dimension);
  double partial_sum;
  if (is_beta_one(b)) {
    partial_sum = std::log(p) + 1.0;
  } else {
    partial_sum = std::max(std::pow(p, 1.0 - b) / (1.0 - b), (1.0 - std::pow(p, 1.0 - b)) / (b - 1.0) + 1.0);
  }
  return (spec.scale / in.alpha) * std::cbrt(p * d / in.budget) *
         std::pow(in.lipschitz / in.alpha, 5.0 / 3.0) * std::pow(in.delta, -1.0 / 6.0) * partial_sum;
}

nlohmann::json planner_report(const SpectrumModel& spec, const PlannerInputs& in) {
  nlohmann::json out;
  const long p_kl = optimal_rank_kl(spec, in);
  out["p_star_kl"] = p_kl;
  std::optional<long> p_uq;
  if (in.sample_count) p_uq = optimal_rank_uq(spec, in);
  out["p_star_uq"] = p_uq ? nlohmann::json(*p_uq) : nlohmann::json(nullptr);
  const long p_star = p_uq ? std::min(p_kl, *p_uq) : p_kl;
  out["p_star"] = p_star;
  try {
    const BudgetPlan plan =
        allocate_budget(in.budget, p_star, spec.dimension, in.alpha, in.lipschitz, in.delta);
    out["N"] = plan.samples;
    out["T"] = plan.iterations;
    out["M"] = plan.eigen_samples;
  } catch (const BudgetInfeasibleError& e) {
    out["N"] = nullptr;
    out["T"] = nullptr;
    out["M"] = nullptr;
    out["budget_infeasible"] = e.what();
    out["minimal_feasible_budget"] = e.minimal_budget();
  }
  out["Pi_min"] = in.tolerance_kl ? nlohmann::json(min_budget_kl(spec, in)) : nlohmann::json(nullptr);
  out["E1_bound"] = approximation_error_bound(spec, in, p_star);
  out["E2_bound"] = optimization_error_bound(spec, in, p_star);
  return out;
}

}  // namespace lrvi
