#pragma once

// Target posteriors p(theta | x) ∝ exp(-psi(theta)) exposed through value and
// gradient oracles only. Hessian information is always recovered from
// gradient differences.

#include <cstdint>
#include <functional>
#include <optional>

#include "lrvi/linalg.hpp"

namespace lrvi {

/// Regularity constants the algorithms are allowed to assume about psi.
struct RegularityConstants {
  double alpha = 1.0;              ///< strong-convexity modulus
  double lipschitz = 1.0;          ///< gradient Lipschitz constant L >= alpha
  double hessian_lipschitz = 0.0;  ///< L_Hess, only used to choose the FD step
  std::optional<double> rho;       ///< contraction of the expected-Hessian map, in [0,1)

  /// Throws ContractError unless 0 < alpha <= L, L_Hess >= 0 and rho in [0,1).
  void validate() const;
};

class TargetPosterior {
 public:
  virtual ~TargetPosterior() = default;

  virtual Eigen::Index dimension() const = 0;
  virtual double value(const Vector& theta) const = 0;
  virtual Vector gradient(const Vector& theta) const = 0;

  /// Gradients of many points at once; row i of the result is grad psi(row i).
  virtual Matrix gradient_rows(const Matrix& thetas) const;

  /// Point the variational mean is frozen at. Zero unless overridden.
  virtual Vector center() const;

  const RegularityConstants& regularity() const { return regularity_; }

 protected:
  TargetPosterior() = default;
  explicit TargetPosterior(RegularityConstants reg);
  void set_regularity(RegularityConstants reg);

 private:
  RegularityConstants regularity_;
};

/// psi(theta) = 1/2 (theta - m)^T Omega (theta - m), with
/// Omega = alpha I + U diag(lambda) U^T held in spectral form.
class GaussianTarget final : public TargetPosterior {
 public:
  /// basis: d x r with orthonormal columns; spectrum: r values >= 0, sorted
  /// descending on return (columns permuted to match).
  static GaussianTarget from_spectrum(double alpha, Matrix basis, Vector spectrum,
                                      std::optional<Vector> mean = std::nullopt);

  /// Eigendecomposes a dense SPD precision. alpha defaults to its smallest
  /// eigenvalue; when given it must not exceed that eigenvalue.
  static GaussianTarget from_precision(const Matrix& precision,
                                       std::optional<double> alpha = std::nullopt,
                                       std::optional<Vector> mean = std::nullopt);

  Eigen::Index dimension() const override { return basis_.rows(); }
  double value(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  Matrix gradient_rows(const Matrix& thetas) const override;
  Vector center() const override { return mean_; }

  double alpha() const { return alpha_; }
  const Matrix& basis() const { return basis_; }
  const Vector& spectrum() const { return spectrum_; }
  /// Spectrum padded with zeros to length d.
  Vector full_spectrum() const;

  Matrix precision() const;
  Vector apply(const Vector& v) const;
  /// log det Omega.
  double log_det() const;

 private:
  GaussianTarget(double alpha, Matrix basis, Vector spectrum, Vector mean);

  double alpha_;
  Matrix basis_;
  Vector spectrum_;
  Vector mean_;
};

/// Bayesian logistic regression with an isotropic Gaussian prior:
/// psi(theta) = sum_i [log(1 + exp(x_i^T theta)) - y_i x_i^T theta]
///              + beta/2 ||theta - mu||^2.
class LogisticTarget final : public TargetPosterior {
 public:
  struct Options {
    double prior_precision = 1.0;
    std::optional<Vector> mean;  ///< prior mean mu, zero when absent
    /// Point the variational mean is frozen at (e.g. the MAP); defaults to mu.
    std::optional<Vector> center;
    /// Override for L; must dominate 1/4 lambda_max(X^T X) + beta.
    std::optional<double> lipschitz;
    /// Override for L_Hess; default is hessian_lipschitz_scale * sum_i ||x_i||^3.
    std::optional<double> hessian_lipschitz;
    double hessian_lipschitz_scale = 0.1;
    std::optional<double> rho;
  };

  /// design: n x d (n may be 0); labels: n entries in {0, 1}.
  LogisticTarget(Matrix design, Vector labels, Options options);

  Eigen::Index dimension() const override { return design_.cols(); }
  double value(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  Matrix gradient_rows(const Matrix& thetas) const override;
  Vector center() const override { return center_; }

  const Matrix& design() const { return design_; }
  const Vector& prior_mean() const { return mean_; }
  const Vector& labels() const { return labels_; }
  double prior_precision() const { return prior_precision_; }

  /// 1/4 lambda_max(X^T X) + beta, the pointwise Hessian bound.
  double hessian_bound() const { return hessian_bound_; }

 private:
  Matrix design_;
  Vector labels_;
  double prior_precision_;
  Vector mean_;
  Vector center_;
  double hessian_bound_;
};

/// Linear regression under a flat prior: psi(theta) = 1/2 theta^T G theta with
/// G = sum_i x_i x_i^T. Only the precision matters for uncertainty
/// quantification, so responses are not stored.
class LinearRegressionTarget final : public TargetPosterior {
 public:
  /// datapoints: n x d. norm_bound defaults to max_i ||x_i||^2 and otherwise
  /// must dominate it. true_covariance is the population E[x x^T] when known.
  LinearRegressionTarget(Matrix datapoints, std::optional<double> norm_bound = std::nullopt,
                         std::optional<Matrix> true_covariance = std::nullopt);

  Eigen::Index dimension() const override { return datapoints_.cols(); }
  double value(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  Matrix gradient_rows(const Matrix& thetas) const override;

  const Matrix& datapoints() const { return datapoints_; }
  Eigen::Index sample_count() const { return datapoints_.rows(); }
  double norm_bound() const { return norm_bound_; }
  const Matrix& gram() const { return gram_; }
  const std::optional<Matrix>& true_covariance() const { return true_covariance_; }

  /// The same posterior as a GaussianTarget (for exact diagnostics).
  GaussianTarget as_gaussian() const;

 private:
  Matrix datapoints_;
  Matrix gram_;
  double norm_bound_;
  std::optional<Matrix> true_covariance_;
};

/// psi given by arbitrary callables. Used for analytic test functions.
class FunctionTarget final : public TargetPosterior {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradientFn = std::function<Vector(const Vector&)>;

  FunctionTarget(Eigen::Index dimension, ValueFn value, GradientFn gradient,
                 RegularityConstants reg, std::optional<Vector> center = std::nullopt);

  Eigen::Index dimension() const override { return dimension_; }
  double value(const Vector& theta) const override { return value_(theta); }
  Vector gradient(const Vector& theta) const override { return gradient_(theta); }
  Vector center() const override { return center_; }

 private:
  Eigen::Index dimension_;
  ValueFn value_;
  GradientFn gradient_;
  Vector center_;
};

/// Checked gradient: theta must be finite and of length d.
Vector psi_grad(const TargetPosterior& target, const Vector& theta);

/// (grad psi(theta + delta u) - grad psi(theta - delta u)) / (2 delta).
/// Requires ||u|| <= 1 and delta > 0; the error against the exact
/// Hessian-vector product is at most L_Hess * delta.
Vector hessian_vector_fd(const TargetPosterior& target, const Vector& theta, const Vector& u,
                         double delta);

/// Largest step that keeps every Hessian-vector estimate of a rank-p readout
/// within eps / sqrt(p): eps / (sqrt(p) L_Hess), capped at max_step.
double fd_step_for_accuracy(const RegularityConstants& reg, double eps, Eigen::Index p,
                            double max_step = 1.0);

struct HessianEstimate {
  Matrix mean;        ///< symmetrized Monte-Carlo mean
  Matrix std_error;   ///< entrywise standard error of the mean
  Eigen::Index samples = 0;
};

/// Monte-Carlo estimate of E_{theta ~ N(center, omega^{-1})}[grad^2 psi(theta)]
/// built column by column from hessian_vector_fd on the standard basis.
/// Throws MatrixError when omega is not SPD.
HessianEstimate estimate_expected_hessian(const TargetPosterior& target, const Matrix& omega,
                                          Eigen::Index samples, std::uint64_t seed,
                                          double delta = 1e-3);

inline Matrix expected_hessian_mc(const TargetPosterior& target, const Matrix& omega,
                                  Eigen::Index samples, std::uint64_t seed, double delta = 1e-3) {
  return estimate_expected_hessian(target, omega, samples, seed, delta).mean;
}

}  // namespace lrvi
