#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <variant>
#include <vector>

#include "lrvi/linalg.hpp"
#include "lrvi/target.hpp"

namespace lrvi {

// ---------------------------------------------------------------- synthetic Gaussian

struct UniformEigenvalues {
  double lo = 1.0;  ///< in units of alpha*
  double hi = 5.0;
};
struct PowerLawEigenvalues {
  double beta = 1.0;
  double scale = 1.0;  ///< lambda_k = scale * k^{-beta}
};
struct ExplicitEigenvalues {
  std::vector<double> values;
};

struct SyntheticGaussianSpec {
  Eigen::Index dimension = 100;
  Eigen::Index true_rank = 2;
  double alpha = 1.0;
  std::variant<UniformEigenvalues, PowerLawEigenvalues, ExplicitEigenvalues> eigenvalues =
      UniformEigenvalues{};
  std::uint64_t seed = 0;

  void validate() const;
};

/// The nonzero excess eigenvalues described by `spec`, descending. Throws
/// ConfigError if any is below 0.1 alpha*.
Vector generate_eigenvalues(const SyntheticGaussianSpec& spec);

/// Omega* = alpha* I + U diag(lambda) U^T with U the Q factor of a standard
/// normal d x p* draw.
GaussianTarget gen_gaussian_target(const SyntheticGaussianSpec& spec);

// ---------------------------------------------------------------- arrhythmia

enum class MissingPolicy { median, drop_column };
enum class CenterPolicy { map, prior_mean };

struct ArrhythmiaConfig {
  std::filesystem::path csv_path;
  Eigen::Index features = 110;
  MissingPolicy missing = MissingPolicy::median;
  bool zscore = true;
  /// Rows with this class code get label 0 (absence); every other class is 1.
  int absence_class = 1;
  std::uint64_t seed = 0;  ///< orders candidates whose |correlation| ties exactly
  double prior_precision = 1.0;
  CenterPolicy center = CenterPolicy::map;
  std::optional<double> rho;
  /// Directory for the normalized-design cache; disabled when empty.
  std::optional<std::filesystem::path> cache_dir;
};

struct ArrhythmiaData {
  LogisticTarget target;
  std::vector<Eigen::Index> selected_columns;  ///< 0-based feature indices, in selection order
  Eigen::Index positives = 0;                  ///< y = 1
  Eigen::Index negatives = 0;                  ///< y = 0
  bool from_cache = false;
};

struct RawTable {
  Matrix features;                   ///< NaN marks a missing entry
  std::vector<int> classes;          ///< last column
};

/// Parses a comma separated table whose last column is an integer class and
/// where '?' marks a missing value. Throws ParseError with 1-based row/column.
RawTable parse_arrhythmia_csv(std::istream& in);

/// Median imputation (or dropping), |point-biserial correlation| feature
/// selection, optional z-scoring, and a logistic target centered at the MAP.
/// Throws ConfigError when fewer usable features exist than requested.
ArrhythmiaData load_arrhythmia(const ArrhythmiaConfig& cfg);

/// Newton's method on psi; the returned point has gradient norm below tol.
Vector logistic_map(const LogisticTarget& target, double tol = 1e-10, int max_iter = 100);

// ---------------------------------------------------------------- linear regression

/// n zero-mean Gaussian draws with the given covariance, redrawn whenever
/// ||x||^2 > R. Throws ConfigError when the acceptance rate is below 1%.
LinearRegressionTarget gen_linear_regression_data(Eigen::Index dimension, Eigen::Index n,
                                                  const Matrix& covariance,
                                                  std::optional<double> norm_bound,
                                                  std::uint64_t seed);

}  // namespace lrvi
