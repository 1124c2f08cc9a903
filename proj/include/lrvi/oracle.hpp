#pragma once

// Dense, deterministic reference computations. Nothing here shares code
// with the stochastic algorithms beyond the target oracles themselves.

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "lrvi/linalg.hpp"
#include "lrvi/target.hpp"

namespace lrvi {

struct DenseSpectrum {
  Vector values;   ///< descending
  Matrix vectors;  ///< orthonormal columns; largest-magnitude entry of each is positive

  /// ||Q diag(values) Q^T - a||_F / max(||a||_F, tiny).
  double reconstruction_error(const Matrix& a) const;
};

/// Full symmetric eigendecomposition. Throws ContractError when a is not
/// square or not symmetric within 1e-10 (relative to its largest entry).
DenseSpectrum dense_eig(const Matrix& a);

/// KL(N(0, omega_q^{-1}) || N(0, omega_p^{-1})) through Cholesky factors.
double dense_kl(const Matrix& omega_q, const Matrix& omega_p);

struct TruncationFloor {
  double exact = 0.0;      ///< sum_{k>p} g(lambda_k / alpha), g(x) = (x - log(1 + x)) / 2
  double surrogate = 0.0;  ///< sum_{k>p} lambda_k^2 / (2 alpha^2)
};

/// Best KL achievable by a rank-p model against the Gaussian target whose
/// precision has spectrum `spectrum`. lambda_k = eigenvalue_k - alpha.
TruncationFloor kl_truncation_floor(const DenseSpectrum& spectrum, double alpha, Eigen::Index p);
/// Same floor from the excess eigenvalues lambda_k (any order; sorted internally).
TruncationFloor kl_truncation_floor_excess(const Vector& excess, double alpha, Eigen::Index p);

struct FixedPointOptions {
  double damping = 0.5;  ///< gamma in (0, 1]
  double tolerance = 1e-8;
  int max_iterations = 200;
  Eigen::Index samples = 100000;
  std::uint64_t seed = 0;
  double fd_step = 1e-3;
};

struct FixedPointResult {
  Matrix precision;
  int iterations = 0;
  double residual = 0.0;  ///< Frobenius size of the last attempted step
};

/// Damped iteration Omega <- (1 - gamma) Omega + gamma E_{N(mu, Omega^{-1})}[grad^2 psi]
/// from alpha I, with common random numbers across iterations. Stops at the
/// first iterate whose next step moves it by less than the tolerance.
/// Throws NonConvergenceError after max_iterations and ContractError when the
/// target does not declare rho.
FixedPointResult fixed_point_precision(const TargetPosterior& target,
                                       const FixedPointOptions& options = {});

/// T rounds of U <- QR(A U) from [e_1 .. e_p], orthonormalized with modified
/// Gram-Schmidt.
Matrix deterministic_power_iteration(const Matrix& a, Eigen::Index p, int iterations);

/// {"d": d, "precision": [[...], ...]} documents used as CLI baselines.
nlohmann::json precision_to_json(const Matrix& omega);
Matrix precision_from_json(const nlohmann::json& doc);
void write_precision_json(const std::filesystem::path& path, const Matrix& omega);
/// Throws Error naming the path when the file is missing, ConfigError when malformed.
Matrix read_precision_json(const std::filesystem::path& path);

}  // namespace lrvi
