#pragma once

// Small helpers shared by the unit tests. Everything here is computed
// independently of the library's own numerics where it serves as an oracle.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "lrvi/linalg.hpp"
#include "lrvi/target.hpp"

namespace lrvi::test {

inline Matrix random_symmetric(Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix a = rng.normal_matrix(d, d);
  return 0.5 * (a + a.transpose());
}

/// A A^T / d + shift I, always SPD for shift > 0.
inline Matrix random_spd(Eigen::Index d, std::uint64_t seed, double shift = 0.5) {
  Rng rng(seed);
  Matrix a = rng.normal_matrix(d, d);
  return a * a.transpose() / static_cast<double>(d) + shift * Matrix::Identity(d, d);
}

/// Gram-Schmidt written out longhand so tests do not lean on the library's QR.
inline Matrix orthonormal_columns(Eigen::Index d, Eigen::Index p, std::uint64_t seed) {
  Rng rng(seed);
  Matrix q = rng.normal_matrix(d, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    for (Eigen::Index j = 0; j < k; ++j) q.col(k) -= q.col(j).dot(q.col(k)) * q.col(j);
    q.col(k) /= q.col(k).norm();
  }
  return q;
}

/// Central differences of the value oracle.
inline Vector fd_gradient(const TargetPosterior& t, const Vector& theta, double h) {
  Vector g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector a = theta, b = theta;
    a(i) += h;
    b(i) -= h;
    g(i) = (t.value(a) - t.value(b)) / (2 * h);
  }
  return g;
}

/// Dense KL(N(0, q^{-1}) || N(0, p^{-1})) via an LU inverse and determinant,
/// deliberately a different route from the Cholesky oracle.
inline double lu_kl(const Matrix& omega_q, const Matrix& omega_p) {
  const Eigen::Index d = omega_q.rows();
  const Eigen::FullPivLU<Matrix> lu(omega_q);
  const double tr = (lu.inverse() * omega_p).trace();
  const double logdet_q = std::log(omega_q.determinant());
  const double logdet_p = std::log(omega_p.determinant());
  return 0.5 * (logdet_q - logdet_p - static_cast<double>(d) + tr);
}

/// Synthetic table in the layout of the UCI arrhythmia file: `rows` rows of
/// `features` numeric columns plus an integer class in [1, 16], with '?' in
/// a few columns. Feature k is shifted by the label for the first `signal`
/// columns so correlation-based selection has something to find.
inline void write_arrhythmia_like_csv(const std::filesystem::path& path, int rows, int features,
                                      int signal, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> cls(1, 16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::ofstream out(path);
  for (int i = 0; i < rows; ++i) {
    const int c = (u(eng) < 0.54) ? 1 : cls(eng);
    const double y = c == 1 ? 0.0 : 1.0;
    for (int k = 0; k < features; ++k) {
      if ((k == 10 || k == 11 || k == 13) && u(eng) < 0.1) {
        out << '?';
      } else {
        const double shift = k < signal ? (1.0 + 0.05 * k) * y : 0.0;
        out << z(eng) + shift;
      }
      out << ',';
    }
    out << c << '\n';
  }
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lrvi_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace lrvi::test
