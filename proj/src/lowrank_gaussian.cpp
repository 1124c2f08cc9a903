#include "lrvi/lowrank_gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "lrvi/errors.hpp"

namespace lrvi {

// ---------------------------------------------------------------- Precision

Precision Precision::identity(Eigen::Index d, double scale) {
  return low_rank(scale, Matrix(d, 0), Vector(0));
}

Precision Precision::low_rank(double alpha, Matrix basis, Vector lambda) {
  if (!(alpha > 0.0)) throw InvalidStateError("Precision: alpha must be > 0");
  if (basis.cols() != lambda.size())
    throw ContractError("Precision: basis columns must match lambda length");
  Vector shrink(lambda.size());
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    if (!(alpha + lambda(k) > 0.0))
      throw InvalidStateError("Precision: alpha + lambda_" + std::to_string(k) + " <= 0");
    shrink(k) = 1.0 - std::sqrt(alpha / (alpha + lambda(k)));
  }
  return Precision(LowRank{alpha, std::move(basis), std::move(lambda), std::move(shrink)});
}

Precision Precision::dense(Matrix omega) {
  if (omega.rows() != omega.cols()) throw ContractError("Precision: matrix must be square");
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) throw MatrixError("Precision: matrix is not SPD");
  Matrix lower = llt.matrixL();
  return Precision(Dense{std::move(omega), std::move(lower)});
}

Eigen::Index Precision::dimension() const {
  return std::visit(
      [](const auto& r) -> Eigen::Index {
        if constexpr (std::is_same_v<std::decay_t<decltype(r)>, LowRank>)
          return r.basis.rows();
        else
          return r.omega.rows();
      },
      repr_);
}

Matrix Precision::apply(const Matrix& x) const {
  if (const auto* lr = std::get_if<LowRank>(&repr_)) {
    if (lr->basis.cols() == 0) return lr->alpha * x;
    return lr->alpha * x + lr->basis * (lr->lambda.asDiagonal() * (lr->basis.transpose() * x));
  }
  return std::get<Dense>(repr_).omega * x;
}

Matrix Precision::sample_centered(Eigen::Index count, Rng& rng) const {
  const Eigen::Index d = dimension();
  Matrix z = rng.normal_matrix(count, d);
  if (const auto* lr = std::get_if<LowRank>(&repr_)) {
    if (lr->basis.cols() > 0) {
      z -= ((z * lr->basis) * lr->shrink.asDiagonal()) * lr->basis.transpose();
    }
    return z / std::sqrt(lr->alpha);
  }
  // Rows x with x = L^{-T} z have covariance (L L^T)^{-1}.
  const auto& dn = std::get<Dense>(repr_);
  Matrix zt = z.transpose();
  dn.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(zt);
  return zt.transpose();
}

Matrix Precision::to_dense() const {
  if (const auto* lr = std::get_if<LowRank>(&repr_)) {
    const Eigen::Index d = lr->basis.rows();
    return lr->alpha * Matrix::Identity(d, d) +
           lr->basis * lr->lambda.asDiagonal() * lr->basis.transpose();
  }
  return std::get<Dense>(repr_).omega;
}

// ---------------------------------------------------------------- LowRankGaussian

LowRankGaussian::LowRankGaussian(Vector mean, double alpha, Matrix basis, Vector lambda)
    : mean_(std::move(mean)), alpha_(alpha), basis_(std::move(basis)), lambda_(std::move(lambda)) {
  const Eigen::Index d = mean_.size();
  if (d < 1) throw ContractError("LowRankGaussian: dimension must be >= 1");
  if (basis_.rows() != d) throw ContractError("LowRankGaussian: basis has wrong row count");
  if (basis_.cols() > d) throw ContractError("LowRankGaussian: rank exceeds dimension");
  if (lambda_.size() != basis_.cols())
    throw ContractError("LowRankGaussian: lambda length must equal rank");
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_))
    throw InvalidStateError("LowRankGaussian: alpha must be finite and > 0");
  if (!mean_.allFinite() || !basis_.allFinite() || !lambda_.allFinite())
    throw InvalidStateError("LowRankGaussian: non-finite parameters");
  if (orthonormality_error(basis_) > 1e-8)
    throw InvalidStateError("LowRankGaussian: basis is not semi-orthonormal");
  for (Eigen::Index k = 0; k < lambda_.size(); ++k) {
    if (!(alpha_ + lambda_(k) > 0.0))
      throw InvalidStateError("LowRankGaussian: alpha + lambda_" + std::to_string(k) + " <= 0");
  }
}

LowRankGaussian LowRankGaussian::isotropic(Vector mean, double alpha) {
  const Eigen::Index d = mean.size();
  return LowRankGaussian(std::move(mean), alpha, Matrix(d, 0), Vector(0));
}

Matrix LowRankGaussian::dense_precision() const { return precision().to_dense(); }

double LowRankGaussian::log_det_precision() const {
  double out = static_cast<double>(dimension()) * std::log(alpha_);
  for (Eigen::Index k = 0; k < lambda_.size(); ++k) out += std::log1p(lambda_(k) / alpha_);
  return out;
}

nlohmann::json LowRankGaussian::to_json() const {
  std::vector<double> u;
  u.reserve(static_cast<std::size_t>(basis_.size()));
  for (Eigen::Index i = 0; i < basis_.rows(); ++i)
    for (Eigen::Index j = 0; j < basis_.cols(); ++j) u.push_back(basis_(i, j));
  return {{"d", dimension()},
          {"p", rank()},
          {"mu", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
          {"alpha", alpha_},
          {"U", u},
          {"lambda", std::vector<double>(lambda_.data(), lambda_.data() + lambda_.size())}};
}

LowRankGaussian LowRankGaussian::from_json(const nlohmann::json& doc) {
  try {
    const auto mu = doc.at("mu").get<std::vector<double>>();
    const auto lam = doc.at("lambda").get<std::vector<double>>();
    const auto u = doc.at("U").get<std::vector<double>>();
    const auto d = static_cast<Eigen::Index>(mu.size());
    const auto p = static_cast<Eigen::Index>(lam.size());
    if (static_cast<Eigen::Index>(u.size()) != d * p)
      throw ConfigError("LowRankGaussian JSON: U must hold d * p entries");
    if (doc.contains("d") && doc.at("d").get<Eigen::Index>() != d)
      throw ConfigError("LowRankGaussian JSON: d disagrees with mu");
    Matrix basis(d, p);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < p; ++j) basis(i, j) = u[static_cast<std::size_t>(i * p + j)];
    return LowRankGaussian(Eigen::Map<const Vector>(mu.data(), d), doc.at("alpha").get<double>(),
                           std::move(basis), Eigen::Map<const Vector>(lam.data(), p));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("LowRankGaussian JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------- PrecisionView

PrecisionView::PrecisionView(const LowRankGaussian& q)
    : alpha_(q.alpha()), basis_(q.basis()), lambda_(q.lambda()) {}

const Matrix& PrecisionView::dense() const {
  std::call_once(once_, [this] {
    const Eigen::Index d = basis_.rows();
    dense_ = alpha_ * Matrix::Identity(d, d) + basis_ * lambda_.asDiagonal() * basis_.transpose();
  });
  return dense_;
}

bool PrecisionView::verify_spectrum(double tol) const {
  const Eigen::Index d = basis_.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(dense(), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) return false;
  std::vector<double> expected(static_cast<std::size_t>(d), alpha_);
  for (Eigen::Index k = 0; k < lambda_.size(); ++k)
    expected[static_cast<std::size_t>(k)] = alpha_ + lambda_(k);
  std::sort(expected.begin(), expected.end());
  const double scale = std::max(1.0, std::abs(expected.back()));
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::abs(eig.eigenvalues()(i) - expected[static_cast<std::size_t>(i)]) > tol * scale)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------- Operations

Matrix sample(const LowRankGaussian& q, Eigen::Index count, std::uint64_t seed) {
  if (count < 0) throw ContractError("sample: count must be >= 0");
  Rng rng(seed);
  Matrix draws = q.precision().sample_centered(count, rng);
  draws.rowwise() += q.mean().transpose();
  return draws;
}

double kl_gaussian(const LowRankGaussian& q, const GaussianTarget& p) {
  const Eigen::Index d = q.dimension();
  if (p.dimension() != d) throw ContractError("kl_gaussian: dimension mismatch");
  if ((q.mean() - p.center()).cwiseAbs().maxCoeff() > 1e-9)
    throw ContractError("kl_gaussian: means differ; only equal-mean KL is supported");

  // tr(Omega_q^{-1} Omega_p) with Omega_q^{-1} = (I - U diag(w) U^T) / alpha_q.
  const Vector full = p.full_spectrum();
  const double trace_p = static_cast<double>(d) * p.alpha() + full.sum();
  double correction = 0.0;
  if (q.rank() > 0) {
    const Vector rq = rayleigh_quotients(q.basis(), p);
    for (Eigen::Index k = 0; k < q.rank(); ++k) {
      const double w = q.lambda()(k) / (q.alpha() + q.lambda()(k));
      correction += w * rq(k);
    }
  }
  const double trace_term = (trace_p - correction) / q.alpha();
  const double kl =
      0.5 * (q.log_det_precision() - p.log_det() - static_cast<double>(d) + trace_term);
  if (!std::isfinite(kl)) throw NumericError("kl_gaussian: non-finite result");
  return std::max(kl, 0.0);
}

double frobenius_precision_error(const LowRankGaussian& q, const Matrix& reference, double scale) {
  const Eigen::Index d = q.dimension();
  if (reference.rows() != d || reference.cols() != d)
    throw ContractError("frobenius_precision_error: dimension mismatch");
  return (reference - scale * q.dense_precision()).norm();
}

Vector rayleigh_quotients(const Matrix& basis, const GaussianTarget& p) {
  if (basis.rows() != p.dimension()) throw ContractError("rayleigh_quotients: dimension mismatch");
  const Matrix proj = p.basis().transpose() * basis;  // r x k
  Vector out(basis.cols());
  for (Eigen::Index k = 0; k < basis.cols(); ++k) {
    out(k) = p.alpha() * basis.col(k).squaredNorm() +
             proj.col(k).cwiseAbs2().dot(p.spectrum());
  }
  return out;
}

Vector rayleigh_quotients(const LowRankGaussian& q, const GaussianTarget& p) {
  return rayleigh_quotients(q.basis(), p);
}

}  // namespace lrvi
