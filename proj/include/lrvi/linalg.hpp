#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace lrvi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Seeded standard-normal stream. One instance per logical draw sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  /// rows x cols matrix of i.i.d. N(0,1), filled row by row.
  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Thin QR with R's diagonal forced positive, so Q is a deterministic
/// function of the input. Returns false (leaving q untouched) when some
/// |R_kk| <= rel_tol * ||A||_F, i.e. the columns are numerically dependent.
bool qr_orthonormalize(const Matrix& a, Matrix& q, double rel_tol = 1e-12);

/// ||U^T U - I||_F.
double orthonormality_error(const Matrix& u);

/// ||U U^T - V V^T||_F for semi-orthonormal U, V of equal shape.
double projector_distance(const Matrix& u, const Matrix& v);

/// Largest |A - A^T| entry.
double asymmetry(const Matrix& a);

bool all_finite(const Matrix& a);

/// Coordinate basis [e_1, ..., e_p] in R^d.
Matrix coordinate_basis(Eigen::Index d, Eigen::Index p);

/// Haar-random d x p semi-orthonormal matrix.
Matrix random_orthonormal(Eigen::Index d, Eigen::Index p, Rng& rng);

}  // namespace lrvi
