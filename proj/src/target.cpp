#include "lrvi/target.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lrvi/errors.hpp"

namespace lrvi {

void RegularityConstants::validate() const {
  if (!(alpha > 0.0)) throw ContractError("regularity: alpha must be > 0");
  if (!(lipschitz >= alpha)) throw ContractError("regularity: L must be >= alpha");
  if (!(hessian_lipschitz >= 0.0)) throw ContractError("regularity: L_Hess must be >= 0");
  if (rho && !(*rho >= 0.0 && *rho < 1.0))
    throw ContractError("regularity: rho must lie in [0, 1)");
}

TargetPosterior::TargetPosterior(RegularityConstants reg) { set_regularity(reg); }

void TargetPosterior::set_regularity(RegularityConstants reg) {
  reg.validate();
  regularity_ = reg;
}

Matrix TargetPosterior::gradient_rows(const Matrix& thetas) const {
  Matrix out(thetas.rows(), thetas.cols());
  for (Eigen::Index i = 0; i < thetas.rows(); ++i)
    out.row(i) = gradient(thetas.row(i).transpose()).transpose();
  return out;
}

Vector TargetPosterior::center() const { return Vector::Zero(dimension()); }

// ---------------------------------------------------------------- Gaussian

GaussianTarget::GaussianTarget(double alpha, Matrix basis, Vector spectrum, Vector mean)
    : alpha_(alpha), basis_(std::move(basis)), spectrum_(std::move(spectrum)),
      mean_(std::move(mean)) {
  const double top = spectrum_.size() > 0 ? spectrum_.maxCoeff() : 0.0;
  set_regularity({alpha_, alpha_ + top, 0.0, 0.0});
}

GaussianTarget GaussianTarget::from_spectrum(double alpha, Matrix basis, Vector spectrum,
                                             std::optional<Vector> mean) {
  const Eigen::Index d = basis.rows();
  if (d < 1) throw ContractError("GaussianTarget: dimension must be >= 1");
  if (basis.cols() != spectrum.size())
    throw ContractError("GaussianTarget: basis columns must match spectrum length");
  if (basis.cols() > d) throw ContractError("GaussianTarget: more eigenvectors than dimensions");
  if (!(alpha > 0.0)) throw ContractError("GaussianTarget: alpha must be > 0");
  if (orthonormality_error(basis) > 1e-10)
    throw ContractError("GaussianTarget: basis is not orthonormal");
  if (spectrum.size() > 0 && !(spectrum.minCoeff() >= 0.0))
    throw ContractError("GaussianTarget: spectrum must be non-negative");
  Vector m = mean.value_or(Vector::Zero(d));
  if (m.size() != d) throw ContractError("GaussianTarget: mean has wrong length");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(spectrum.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return spectrum(a) > spectrum(b); });
  Matrix sorted_basis(d, spectrum.size());
  Vector sorted(spectrum.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    sorted_basis.col(static_cast<Eigen::Index>(k)) = basis.col(order[k]);
    sorted(static_cast<Eigen::Index>(k)) = spectrum(order[k]);
  }
  return GaussianTarget(alpha, std::move(sorted_basis), std::move(sorted), std::move(m));
}

GaussianTarget GaussianTarget::from_precision(const Matrix& precision, std::optional<double> alpha,
                                              std::optional<Vector> mean) {
  if (precision.rows() != precision.cols() || precision.rows() < 1)
    throw ContractError("GaussianTarget: precision must be square and non-empty");
  const double scale = std::max(1.0, precision.cwiseAbs().maxCoeff());
  if (asymmetry(precision) > 1e-10 * scale)
    throw ContractError("GaussianTarget: precision is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (precision + precision.transpose()));
  if (eig.info() != Eigen::Success) throw MatrixError("GaussianTarget: eigensolver failed");
  const Vector values = eig.eigenvalues();  // ascending
  const double lowest = values(0);
  if (!(lowest > 0.0)) throw MatrixError("GaussianTarget: precision is not positive definite");
  const double a = alpha.value_or(lowest);
  if (a > lowest * (1.0 + 1e-12))
    throw ContractError("GaussianTarget: alpha exceeds the smallest eigenvalue");
  Vector spectrum = (values.array() - a).max(0.0).matrix();
  return from_spectrum(a, eig.eigenvectors(), std::move(spectrum), std::move(mean));
}

double GaussianTarget::value(const Vector& theta) const {
  const Vector c = theta - mean_;
  const Vector proj = basis_.transpose() * c;
  return 0.5 * (alpha_ * c.squaredNorm() + proj.dot(spectrum_.cwiseProduct(proj)));
}

Vector GaussianTarget::gradient(const Vector& theta) const { return apply(theta - mean_); }

Matrix GaussianTarget::gradient_rows(const Matrix& thetas) const {
  const Matrix c = thetas.rowwise() - mean_.transpose();
  const Matrix proj = c * basis_;
  return alpha_ * c + (proj * spectrum_.asDiagonal()) * basis_.transpose();
}

Vector GaussianTarget::full_spectrum() const {
  Vector full = Vector::Zero(dimension());
  full.head(spectrum_.size()) = spectrum_;
  return full;
}

Matrix GaussianTarget::precision() const {
  const Eigen::Index d = dimension();
  return alpha_ * Matrix::Identity(d, d) + basis_ * spectrum_.asDiagonal() * basis_.transpose();
}

Vector GaussianTarget::apply(const Vector& v) const {
  return alpha_ * v + basis_ * spectrum_.cwiseProduct(basis_.transpose() * v);
}

double GaussianTarget::log_det() const {
  double out = static_cast<double>(dimension()) * std::log(alpha_);
  for (Eigen::Index k = 0; k < spectrum_.size(); ++k) out += std::log1p(spectrum_(k) / alpha_);
  return out;
}

// ---------------------------------------------------------------- Logistic

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

LogisticTarget::LogisticTarget(Matrix design, Vector labels, Options options)
    : design_(std::move(design)), labels_(std::move(labels)),
      prior_precision_(options.prior_precision) {
  const Eigen::Index n = design_.rows();
  const Eigen::Index d = design_.cols();
  if (d < 1) throw ContractError("LogisticTarget: dimension must be >= 1");
  if (labels_.size() != n) throw ContractError("LogisticTarget: label count must match rows");
  if (!design_.allFinite()) throw ContractError("LogisticTarget: design matrix has non-finite rows");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels_(i) != 0.0 && labels_(i) != 1.0)
      throw ContractError("LogisticTarget: labels must be 0 or 1");
  }
  if (!(prior_precision_ > 0.0)) throw ContractError("LogisticTarget: prior precision must be > 0");
  mean_ = options.mean.value_or(Vector::Zero(d));
  if (mean_.size() != d) throw ContractError("LogisticTarget: mean has wrong length");
  center_ = options.center.value_or(mean_);
  if (center_.size() != d || !center_.allFinite())
    throw ContractError("LogisticTarget: center has wrong length or is not finite");

  double gram_top = 0.0;
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(design_.transpose() * design_,
                                              Eigen::EigenvaluesOnly);
    gram_top = std::max(0.0, eig.eigenvalues()(d - 1));
  }
  hessian_bound_ = 0.25 * gram_top + prior_precision_;

  RegularityConstants reg;
  reg.alpha = prior_precision_;
  reg.lipschitz = options.lipschitz.value_or(hessian_bound_);
  if (reg.lipschitz < hessian_bound_ * (1.0 - 1e-12))
    throw ContractError("LogisticTarget: supplied L is below 1/4 lambda_max(X^T X) + beta");
  if (options.hessian_lipschitz) {
    reg.hessian_lipschitz = *options.hessian_lipschitz;
  } else {
    double cubes = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) cubes += std::pow(design_.row(i).norm(), 3);
    reg.hessian_lipschitz = options.hessian_lipschitz_scale * cubes;
  }
  reg.rho = options.rho;
  set_regularity(reg);
}

double LogisticTarget::value(const Vector& theta) const {
  const Vector z = design_ * theta;
  double out = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) out += softplus(z(i)) - labels_(i) * z(i);
  return out + 0.5 * prior_precision_ * (theta - mean_).squaredNorm();
}

Vector LogisticTarget::gradient(const Vector& theta) const {
  Vector resid = design_ * theta;
  for (Eigen::Index i = 0; i < resid.size(); ++i) resid(i) = sigmoid(resid(i)) - labels_(i);
  return design_.transpose() * resid + prior_precision_ * (theta - mean_);
}

Matrix LogisticTarget::gradient_rows(const Matrix& thetas) const {
  // Vectorized logistic: exp(-z) may overflow to inf, which still yields 0.
  Matrix resid = (1.0 + (-(thetas * design_.transpose()).array()).exp()).inverse().matrix();
  resid.rowwise() -= labels_.transpose();
  Matrix out = resid * design_;
  out += prior_precision_ * (thetas.rowwise() - mean_.transpose());
  return out;
}

// ---------------------------------------------------------------- Linear

LinearRegressionTarget::LinearRegressionTarget(Matrix datapoints, std::optional<double> norm_bound,
                                               std::optional<Matrix> true_covariance)
    : datapoints_(std::move(datapoints)), true_covariance_(std::move(true_covariance)) {
  const Eigen::Index d = datapoints_.cols();
  if (d < 1) throw ContractError("LinearRegressionTarget: dimension must be >= 1");
  if (datapoints_.rows() < 1) throw ContractError("LinearRegressionTarget: need n >= 1");
  if (!datapoints_.allFinite()) throw ContractError("LinearRegressionTarget: non-finite datapoint");
  const double largest = datapoints_.rowwise().squaredNorm().maxCoeff();
  norm_bound_ = norm_bound.value_or(largest);
  if (largest > norm_bound_ * (1.0 + 1e-12))
    throw ContractError("LinearRegressionTarget: a datapoint exceeds the norm bound R");
  if (true_covariance_ && (true_covariance_->rows() != d || true_covariance_->cols() != d))
    throw ContractError("LinearRegressionTarget: true covariance has wrong shape");
  gram_ = datapoints_.transpose() * datapoints_;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_, Eigen::EigenvaluesOnly);
  const double top = std::max(eig.eigenvalues()(d - 1), 0.0);
  // A singular Gram matrix (n < d) is not strongly convex; alpha is floored so
  // the constants stay well formed.
  const double floor = 1e-12 * std::max(1.0, top);
  const double alpha = std::max(eig.eigenvalues()(0), floor);
  set_regularity({alpha, std::max(top, alpha), 0.0, 0.0});
}

double LinearRegressionTarget::value(const Vector& theta) const {
  return 0.5 * theta.dot(gram_ * theta);
}

Vector LinearRegressionTarget::gradient(const Vector& theta) const { return gram_ * theta; }

Matrix LinearRegressionTarget::gradient_rows(const Matrix& thetas) const {
  return thetas * gram_;  // gram is symmetric
}

GaussianTarget LinearRegressionTarget::as_gaussian() const {
  return GaussianTarget::from_precision(gram_, regularity().alpha);
}

// ---------------------------------------------------------------- Function

FunctionTarget::FunctionTarget(Eigen::Index dimension, ValueFn value, GradientFn gradient,
                               RegularityConstants reg, std::optional<Vector> center)
    : TargetPosterior(reg), dimension_(dimension), value_(std::move(value)),
      gradient_(std::move(gradient)), center_(center.value_or(Vector::Zero(dimension))) {
  if (dimension_ < 1) throw ContractError("FunctionTarget: dimension must be >= 1");
  if (center_.size() != dimension_) throw ContractError("FunctionTarget: center has wrong length");
}

// ---------------------------------------------------------------- Oracles

Vector psi_grad(const TargetPosterior& target, const Vector& theta) {
  if (theta.size() != target.dimension())
    throw ContractError("psi_grad: theta has length " + std::to_string(theta.size()) +
                        ", target dimension is " + std::to_string(target.dimension()));
  if (!theta.allFinite()) throw ContractError("psi_grad: theta is not finite");
  return target.gradient(theta);
}

Vector hessian_vector_fd(const TargetPosterior& target, const Vector& theta, const Vector& u,
                         double delta) {
  const Eigen::Index d = target.dimension();
  if (theta.size() != d || u.size() != d)
    throw ContractError("hessian_vector_fd: dimension mismatch");
  if (!(delta > 0.0)) throw ContractError("hessian_vector_fd: delta must be > 0");
  if (u.norm() > 1.0 + 1e-12) throw ContractError("hessian_vector_fd: ||u|| must be <= 1");
  const Vector plus = target.gradient(theta + delta * u);
  const Vector minus = target.gradient(theta - delta * u);
  Vector out = (plus - minus) / (2.0 * delta);
  if (!out.allFinite()) throw NumericError("hessian_vector_fd: non-finite gradient difference");
  return out;
}

double fd_step_for_accuracy(const RegularityConstants& reg, double eps, Eigen::Index p,
                            double max_step) {
  if (!(eps > 0.0)) throw ContractError("fd_step_for_accuracy: eps must be > 0");
  if (reg.hessian_lipschitz <= 0.0) return max_step;
  const double root_p = std::sqrt(static_cast<double>(std::max<Eigen::Index>(p, 1)));
  return std::min(max_step, eps / (root_p * reg.hessian_lipschitz));
}

HessianEstimate estimate_expected_hessian(const TargetPosterior& target, const Matrix& omega,
                                          Eigen::Index samples, std::uint64_t seed, double delta) {
  const Eigen::Index d = target.dimension();
  if (omega.rows() != d || omega.cols() != d)
    throw ContractError("expected_hessian_mc: omega has wrong shape");
  if (samples < 1) throw ContractError("expected_hessian_mc: samples must be >= 1");
  if (!(delta > 0.0)) throw ContractError("expected_hessian_mc: delta must be > 0");
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) throw MatrixError("expected_hessian_mc: omega is not SPD");
  const Matrix lower = llt.matrixL();

  Rng rng(seed);
  const Vector center = target.center();
  const Matrix upper = lower.transpose();
  Matrix sum = Matrix::Zero(d, d);
  Matrix sum_sq = Matrix::Zero(d, d);
  // Samples are processed in blocks so each gradient_rows call sees
  // 2 d B probe points; draws keep their one-sample-at-a-time order.
  constexpr Eigen::Index kBlock = 64;
  Matrix per_sample(d, d);
  for (Eigen::Index first = 0; first < samples; first += kBlock) {
    const Eigen::Index b = std::min(kBlock, samples - first);
    Matrix probes(2 * d * b, d);
    for (Eigen::Index s = 0; s < b; ++s) {
      Vector z(d);
      for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
      const Vector theta = center + upper.triangularView<Eigen::Upper>().solve(z);
      for (Eigen::Index i = 0; i < d; ++i) {
        const Eigen::Index row = 2 * d * s + i;
        probes.row(row) = theta.transpose();
        probes.row(row + d) = theta.transpose();
        probes(row, i) += delta;
        probes(row + d, i) -= delta;
      }
    }
    const Matrix grads = target.gradient_rows(probes);
    for (Eigen::Index s = 0; s < b; ++s) {
      const Eigen::Index base = 2 * d * s;
      for (Eigen::Index i = 0; i < d; ++i)
        per_sample.col(i) = (grads.row(base + i) - grads.row(base + d + i)).transpose() / (2.0 * delta);
      const Matrix sym = 0.5 * (per_sample + per_sample.transpose());
      if (!sym.allFinite()) throw NumericError("expected_hessian_mc: non-finite Hessian estimate");
      sum += sym;
      sum_sq += sym.cwiseProduct(sym);
    }
  }
  HessianEstimate out;
  out.samples = samples;
  const double count = static_cast<double>(samples);
  out.mean = sum / count;
  if (samples > 1) {
    const Matrix var = ((sum_sq - count * out.mean.cwiseProduct(out.mean)) / (count - 1.0))
                           .cwiseMax(0.0);
    out.std_error = (var / count).cwiseSqrt();
  } else {
    out.std_error = Matrix::Zero(d, d);
  }
  return out;
}

}  // namespace lrvi
