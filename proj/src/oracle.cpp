#include "lrvi/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <vector>

#include "lrvi/errors.hpp"

namespace lrvi {

double DenseSpectrum::reconstruction_error(const Matrix& a) const {
  const Matrix rebuilt = vectors * values.asDiagonal() * vectors.transpose();
  return (rebuilt - a).norm() / std::max(a.norm(), 1e-300);
}

DenseSpectrum dense_eig(const Matrix& a) {
  if (a.rows() != a.cols()) throw ContractError("dense_eig: matrix must be square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (asymmetry(a) > 1e-10 * scale) throw ContractError("dense_eig: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  if (eig.info() != Eigen::Success) throw NumericError("dense_eig: eigensolver failed");

  const Eigen::Index d = a.rows();
  DenseSpectrum out{Vector(d), Matrix(d, d)};
  for (Eigen::Index k = 0; k < d; ++k) {
    const Eigen::Index src = d - 1 - k;  // ascending -> descending
    out.values(k) = eig.eigenvalues()(src);
    Vector v = eig.eigenvectors().col(src);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0.0) v = -v;
    out.vectors.col(k) = v;
  }
  return out;
}

double dense_kl(const Matrix& omega_q, const Matrix& omega_p) {
  if (omega_q.rows() != omega_p.rows() || omega_q.cols() != omega_p.cols())
    throw ContractError("dense_kl: dimension mismatch");
  Eigen::LLT<Matrix> lq(omega_q);
  Eigen::LLT<Matrix> lp(omega_p);
  if (lq.info() != Eigen::Success || lp.info() != Eigen::Success)
    throw MatrixError("dense_kl: precision is not SPD");
  auto log_det = [](const Eigen::LLT<Matrix>& l) {
    return 2.0 * l.matrixL().toDenseMatrix().diagonal().array().log().sum();
  };
  const double trace = lq.solve(omega_p).trace();
  const double d = static_cast<double>(omega_q.rows());
  return 0.5 * (log_det(lq) - log_det(lp) - d + trace);
}

TruncationFloor kl_truncation_floor_excess(const Vector& excess, double alpha, Eigen::Index p) {
  if (!(alpha > 0.0)) throw ContractError("kl_truncation_floor: alpha must be > 0");
  if (p < 0 || p > excess.size()) throw ContractError("kl_truncation_floor: p must lie in [0, d]");
  std::vector<double> lam(excess.data(), excess.data() + excess.size());
  std::sort(lam.begin(), lam.end(), std::greater<>());
  TruncationFloor out;
  for (std::size_t k = static_cast<std::size_t>(p); k < lam.size(); ++k) {
    const double x = std::max(lam[k], 0.0) / alpha;
    out.exact += 0.5 * (x - std::log1p(x));
    out.surrogate += 0.5 * x * x;
  }
  return out;
}

TruncationFloor kl_truncation_floor(const DenseSpectrum& spectrum, double alpha, Eigen::Index p) {
  return kl_truncation_floor_excess(spectrum.values.array() - alpha, alpha, p);
}

FixedPointResult fixed_point_precision(const TargetPosterior& target,
                                       const FixedPointOptions& options) {
  const RegularityConstants& reg = target.regularity();
  if (!reg.rho) throw ContractError("fixed_point_precision: target must declare rho < 1");
  if (!(options.damping > 0.0 && options.damping <= 1.0))
    throw ContractError("fixed_point_precision: damping must lie in (0, 1]");
  if (options.max_iterations < 1) throw ContractError("fixed_point_precision: max_iterations >= 1");

  const Eigen::Index d = target.dimension();
  Matrix omega = reg.alpha * Matrix::Identity(d, d);
  double residual = 0.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Matrix h =
        expected_hessian_mc(target, omega, options.samples, options.seed, options.fd_step);
    Matrix next = (1.0 - options.damping) * omega + options.damping * h;
    next = 0.5 * (next + next.transpose());
    residual = (next - omega).norm();
    if (residual < options.tolerance) return {omega, it, residual};
    omega = std::move(next);
  }
  throw NonConvergenceError(residual, "fixed_point_precision: no convergence after " +
                                          std::to_string(options.max_iterations) +
                                          " iterations (last step " + std::to_string(residual) + ")");
}

namespace {

// Modified Gram-Schmidt; the diagonal of the implied R is positive.
Matrix mgs(Matrix a) {
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    for (Eigen::Index j = 0; j < k; ++j) a.col(k) -= a.col(j).dot(a.col(k)) * a.col(j);
    const double n = a.col(k).norm();
    if (!(n > 0.0)) throw NumericError("deterministic_power_iteration: rank collapse");
    a.col(k) /= n;
  }
  return a;
}

}  // namespace

Matrix deterministic_power_iteration(const Matrix& a, Eigen::Index p, int iterations) {
  if (a.rows() != a.cols()) throw ContractError("deterministic_power_iteration: matrix must be square");
  if (p < 0 || p > a.rows()) throw ContractError("deterministic_power_iteration: p must lie in [0, d]");
  Matrix u = Matrix::Identity(a.rows(), p);
  for (int t = 0; t < iterations; ++t) u = mgs(a * u);
  return u;
}

nlohmann::json precision_to_json(const Matrix& omega) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < omega.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(omega.cols()));
    for (Eigen::Index j = 0; j < omega.cols(); ++j) row[static_cast<std::size_t>(j)] = omega(i, j);
    rows.push_back(row);
  }
  return {{"d", omega.rows()}, {"precision", rows}};
}

Matrix precision_from_json(const nlohmann::json& doc) {
  try {
    const auto& rows = doc.at("precision");
    const auto d = static_cast<Eigen::Index>(rows.size());
    if (doc.contains("d") && doc.at("d").get<Eigen::Index>() != d)
      throw ConfigError("precision JSON: d disagrees with the matrix");
    Matrix out(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto row = rows.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(row.size()) != d)
        throw ConfigError("precision JSON: matrix must be square");
      for (Eigen::Index j = 0; j < d; ++j) out(i, j) = row[static_cast<std::size_t>(j)];
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("precision JSON: ") + e.what());
  }
}

void write_precision_json(const std::filesystem::path& path, const Matrix& omega) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << precision_to_json(omega).dump(1) << '\n';
}

Matrix read_precision_json(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw Error("baseline file not found: expected " + path.string());
  std::ifstream in(path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("baseline " + path.string() + ": " + e.what());
  }
  return precision_from_json(doc);
}

}  // namespace lrvi
