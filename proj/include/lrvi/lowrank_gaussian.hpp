#pragma once

// The rank-p Gaussian inferential model N(mu, Omega^{-1}) with
// Omega = alpha I + U diag(lambda) U^T and U semi-orthonormal.

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <variant>

#include <json.hpp>

#include "lrvi/linalg.hpp"
#include "lrvi/target.hpp"

namespace lrvi {

/// A precision matrix the samplers can draw from: either structured
/// (alpha I + U diag(lambda) U^T, never materialized) or dense SPD.
class Precision {
 public:
  static Precision identity(Eigen::Index d, double scale = 1.0);
  static Precision low_rank(double alpha, Matrix basis, Vector lambda);
  /// Throws MatrixError when omega is not SPD.
  static Precision dense(Matrix omega);

  Eigen::Index dimension() const;
  bool is_low_rank() const { return std::holds_alternative<LowRank>(repr_); }

  /// Omega * x for a d x k block.
  Matrix apply(const Matrix& x) const;
  /// count x d matrix whose rows are i.i.d. N(0, Omega^{-1}).
  Matrix sample_centered(Eigen::Index count, Rng& rng) const;
  Matrix to_dense() const;

 private:
  struct LowRank {
    double alpha;
    Matrix basis;
    Vector lambda;
    Vector shrink;  // 1 - sqrt(alpha / (alpha + lambda_k))
  };
  struct Dense {
    Matrix omega;
    Matrix lower;  // Cholesky factor, omega = L L^T
  };
  explicit Precision(std::variant<LowRank, Dense> repr) : repr_(std::move(repr)) {}

  std::variant<LowRank, Dense> repr_;
};

class LowRankGaussian {
 public:
  /// Throws InvalidStateError unless U^T U = I (1e-8), alpha > 0 and
  /// alpha + lambda_k > 0; throws ContractError on shape mismatch.
  LowRankGaussian(Vector mean, double alpha, Matrix basis, Vector lambda);

  /// N(mean, alpha^{-1} I) with an empty eigenspace.
  static LowRankGaussian isotropic(Vector mean, double alpha);

  Eigen::Index dimension() const { return mean_.size(); }
  Eigen::Index rank() const { return basis_.cols(); }
  const Vector& mean() const { return mean_; }
  double alpha() const { return alpha_; }
  const Matrix& basis() const { return basis_; }
  const Vector& lambda() const { return lambda_; }

  Precision precision() const { return Precision::low_rank(alpha_, basis_, lambda_); }
  Matrix dense_precision() const;
  /// d log alpha + sum_k log(1 + lambda_k / alpha).
  double log_det_precision() const;

  nlohmann::json to_json() const;
  /// Throws ConfigError on malformed documents.
  static LowRankGaussian from_json(const nlohmann::json& doc);

 private:
  Vector mean_;
  double alpha_;
  Matrix basis_;
  Vector lambda_;
};

/// Dense alpha I + U diag(lambda) U^T, assembled on first use.
class PrecisionView {
 public:
  explicit PrecisionView(const LowRankGaussian& q);

  const Matrix& dense() const;
  /// Checks that the spectrum of the assembled matrix is
  /// {alpha + lambda_k} plus alpha with multiplicity d - p.
  bool verify_spectrum(double tol = 1e-9) const;

 private:
  double alpha_;
  Matrix basis_;
  Vector lambda_;
  mutable std::once_flag once_;
  mutable Matrix dense_;
};

/// count i.i.d. draws (rows) from N(mu, Omega^{-1}) in O(count d p).
Matrix sample(const LowRankGaussian& q, Eigen::Index count, std::uint64_t seed);

/// KL(q || p) for equal means. Throws ContractError when the means differ by
/// more than 1e-9 or the dimensions disagree.
double kl_gaussian(const LowRankGaussian& q, const GaussianTarget& p);

/// ||reference - scale * (alpha I + U diag(lambda) U^T)||_F.
double frobenius_precision_error(const LowRankGaussian& q, const Matrix& reference,
                                 double scale = 1.0);

/// u_k^T Omega_p u_k for each column of q's basis.
Vector rayleigh_quotients(const LowRankGaussian& q, const GaussianTarget& p);
Vector rayleigh_quotients(const Matrix& basis, const GaussianTarget& p);

}  // namespace lrvi
