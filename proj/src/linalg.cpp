#include "lrvi/linalg.hpp"

#include <cmath>

namespace lrvi {

Matrix Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal();
  return out;
}

bool qr_orthonormalize(const Matrix& a, Matrix& q, double rel_tol) {
  const Eigen::Index d = a.rows();
  const Eigen::Index p = a.cols();
  if (p == 0) {
    q.resize(d, 0);
    return true;
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix r = qr.matrixQR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const double scale = a.norm();
  if (!(scale > 0.0) || !std::isfinite(scale)) return false;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (!(std::abs(r(k, k)) > rel_tol * scale)) return false;
  }
  Matrix thin = qr.householderQ() * Matrix::Identity(d, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    if (r(k, k) < 0.0) thin.col(k) = -thin.col(k);
  }
  q = std::move(thin);
  return true;
}

double orthonormality_error(const Matrix& u) {
  const Eigen::Index p = u.cols();
  return (u.transpose() * u - Matrix::Identity(p, p)).norm();
}

double projector_distance(const Matrix& u, const Matrix& v) {
  // ||UU^T - VV^T||_F^2 = 2p - 2||U^T V||_F^2 loses accuracy near zero, so
  // form the d x d difference directly.
  return (u * u.transpose() - v * v.transpose()).norm();
}

double asymmetry(const Matrix& a) {
  if (a.rows() != a.cols()) return INFINITY;
  return (a - a.transpose()).cwiseAbs().maxCoeff();
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

Matrix coordinate_basis(Eigen::Index d, Eigen::Index p) {
  return Matrix::Identity(d, p);
}

Matrix random_orthonormal(Eigen::Index d, Eigen::Index p, Rng& rng) {
  Matrix q;
  // A Gaussian matrix has full column rank with probability one.
  while (!qr_orthonormalize(rng.normal_matrix(d, p), q)) {
  }
  return q;
}

}  // namespace lrvi
