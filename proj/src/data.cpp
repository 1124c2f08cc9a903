#include "lrvi/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lrvi/errors.hpp"

namespace lrvi {

// ---------------------------------------------------------------- synthetic Gaussian

void SyntheticGaussianSpec::validate() const {
  if (dimension < 1) throw ConfigError("synthetic Gaussian: d must be >= 1");
  if (true_rank < 0 || true_rank > dimension) throw ConfigError("synthetic Gaussian: need 0 <= p* <= d");
  if (!(alpha > 0.0)) throw ConfigError("synthetic Gaussian: alpha* must be > 0");
  if (const auto* u = std::get_if<UniformEigenvalues>(&eigenvalues)) {
    if (!(u->lo <= u->hi)) throw ConfigError("synthetic Gaussian: uniform range needs lo <= hi");
  }
  if (const auto* e = std::get_if<ExplicitEigenvalues>(&eigenvalues)) {
    if (static_cast<Eigen::Index>(e->values.size()) != true_rank)
      throw ConfigError("synthetic Gaussian: explicit eigenvalue list must have p* entries");
  }
}

Vector generate_eigenvalues(const SyntheticGaussianSpec& spec) {
  spec.validate();
  const Eigen::Index p = spec.true_rank;
  Vector lambda(p);
  // A stream separate from the basis draw so both are reproducible independently.
  Rng rng(spec.seed ^ 0xA5A5A5A5DEADBEEFULL);
  std::visit(
      [&](const auto& g) {
        using G = std::decay_t<decltype(g)>;
        for (Eigen::Index k = 0; k < p; ++k) {
          if constexpr (std::is_same_v<G, UniformEigenvalues>) {
            lambda(k) = spec.alpha * rng.uniform(g.lo, g.hi);
          } else if constexpr (std::is_same_v<G, PowerLawEigenvalues>) {
            lambda(k) = g.scale * std::pow(static_cast<double>(k + 1), -g.beta);
          } else {
            lambda(k) = g.values[static_cast<std::size_t>(k)];
          }
        }
      },
      spec.eigenvalues);
  std::sort(lambda.data(), lambda.data() + p, std::greater<>());
  for (Eigen::Index k = 0; k < p; ++k) {
    if (!(lambda(k) >= 0.1 * spec.alpha))
      throw ConfigError("synthetic Gaussian: eigenvalue " + std::to_string(lambda(k)) +
                        " is below 0.1 alpha*");
  }
  return lambda;
}

GaussianTarget gen_gaussian_target(const SyntheticGaussianSpec& spec) {
  const Vector lambda = generate_eigenvalues(spec);
  Rng rng(spec.seed);
  Matrix basis = random_orthonormal(spec.dimension, spec.true_rank, rng);
  return GaussianTarget::from_spectrum(spec.alpha, std::move(basis), lambda);
}

// ---------------------------------------------------------------- arrhythmia

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace and CR
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_fingerprint(const ArrhythmiaConfig& cfg, const std::string& csv_bytes) {
  std::ostringstream s;
  s << "features=" << cfg.features << ";missing=" << static_cast<int>(cfg.missing)
    << ";zscore=" << cfg.zscore << ";absence=" << cfg.absence_class << ";seed=" << cfg.seed
    << ";beta=" << cfg.prior_precision << ";center=" << static_cast<int>(cfg.center);
  const std::uint64_t h = fnv1a(csv_bytes, fnv1a(s.str()));
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

struct CachedDesign {
  Matrix design;
  Vector labels;
  Vector center;
  std::vector<Eigen::Index> selected;
};

constexpr std::uint32_t kCacheMagic = 0x4C525643;  // "LRVC"

void write_cache(const std::filesystem::path& dir, const std::string& hash, const CachedDesign& c) {
  std::filesystem::create_directories(dir);
  const auto bin = dir / ("arrhythmia_" + hash + ".bin");
  std::ofstream out(bin, std::ios::binary);
  if (!out) return;  // caching is best effort
  const std::uint64_t n = static_cast<std::uint64_t>(c.design.rows());
  const std::uint64_t d = static_cast<std::uint64_t>(c.design.cols());
  out.write(reinterpret_cast<const char*>(&kCacheMagic), sizeof kCacheMagic);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = c.design;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(n * d * sizeof(double)));
  out.write(reinterpret_cast<const char*>(c.labels.data()), static_cast<std::streamsize>(n * sizeof(double)));
  out.write(reinterpret_cast<const char*>(c.center.data()), static_cast<std::streamsize>(d * sizeof(double)));

  nlohmann::json side{{"cfg_hash", hash}, {"n", n}, {"d", d}, {"selected_columns", c.selected},
                      {"binary", bin.filename().string()}};
  std::ofstream js(dir / ("arrhythmia_" + hash + ".json"));
  js << side.dump(1) << '\n';
}

std::optional<CachedDesign> read_cache(const std::filesystem::path& dir, const std::string& hash) {
  const auto side_path = dir / ("arrhythmia_" + hash + ".json");
  const auto bin = dir / ("arrhythmia_" + hash + ".bin");
  if (!std::filesystem::exists(side_path) || !std::filesystem::exists(bin)) return std::nullopt;
  try {
    std::ifstream js(side_path);
    nlohmann::json side;
    js >> side;
    if (side.at("cfg_hash").get<std::string>() != hash) return std::nullopt;
    std::ifstream in(bin, std::ios::binary);
    std::uint32_t magic = 0;
    std::uint64_t n = 0, d = 0;
    in.read(reinterpret_cast<char*>(&magic), sizeof magic);
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    in.read(reinterpret_cast<char*>(&d), sizeof d);
    if (!in || magic != kCacheMagic || n != side.at("n").get<std::uint64_t>() ||
        d != side.at("d").get<std::uint64_t>())
      return std::nullopt;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(n, d);
    CachedDesign c;
    c.labels.resize(static_cast<Eigen::Index>(n));
    c.center.resize(static_cast<Eigen::Index>(d));
    in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(n * d * sizeof(double)));
    in.read(reinterpret_cast<char*>(c.labels.data()), static_cast<std::streamsize>(n * sizeof(double)));
    in.read(reinterpret_cast<char*>(c.center.data()), static_cast<std::streamsize>(d * sizeof(double)));
    if (!in) return std::nullopt;
    c.design = rm;
    c.selected = side.at("selected_columns").get<std::vector<Eigen::Index>>();
    return c;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

RawTable parse_arrhythmia_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::vector<int> classes;
  std::string line;
  std::size_t row = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (width == 0) {
      if (fields.size() < 2) throw ParseError(row, 0, "arrhythmia CSV: need at least one feature and a class");
      width = fields.size();
    } else if (fields.size() != width) {
      throw ParseError(row, std::min(fields.size(), width) + 1,
                       "arrhythmia CSV: expected " + std::to_string(width) + " fields, found " +
                           std::to_string(fields.size()));
    }
    std::vector<double> values(width - 1);
    for (std::size_t j = 0; j + 1 < width; ++j) {
      const std::string& f = fields[j];
      if (f == "?" || f.empty()) {
        values[j] = std::nan("");
        continue;
      }
      try {
        std::size_t used = 0;
        values[j] = std::stod(f, &used);
        if (used != f.size() || !std::isfinite(values[j])) throw std::invalid_argument(f);
      } catch (const std::exception&) {
        throw ParseError(row, j + 1, "arrhythmia CSV: bad value '" + f + "'");
      }
    }
    const std::string& label = fields[width - 1];
    try {
      std::size_t used = 0;
      const int c = std::stoi(label, &used);
      if (used != label.size()) throw std::invalid_argument(label);
      classes.push_back(c);
    } catch (const std::exception&) {
      throw ParseError(row, width, "arrhythmia CSV: bad class label '" + label + "'");
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw ParseError(0, 0, "arrhythmia CSV: no data rows");

  RawTable out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j + 1 < width; ++j)
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  out.classes = std::move(classes);
  return out;
}

Vector logistic_map(const LogisticTarget& target, double tol, int max_iter) {
  const Matrix& x = target.design();
  const Eigen::Index d = target.dimension();
  const double beta = target.prior_precision();
  Vector theta = target.prior_mean();
  for (int it = 0; it < max_iter; ++it) {
    const Vector g = target.gradient(theta);
    if (g.norm() < tol) return theta;
    const Vector z = x * theta;
    Vector w(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-z(i)));
      w(i) = s * (1.0 - s);
    }
    const Matrix h = x.transpose() * w.asDiagonal() * x + beta * Matrix::Identity(d, d);
    const Vector step = h.llt().solve(g);
    // Backtracking keeps Newton monotone on psi.
    double t = 1.0;
    const double f0 = target.value(theta);
    while (t > 1e-12 && target.value(theta - t * step) > f0 - 1e-4 * t * g.dot(step)) t *= 0.5;
    theta -= t * step;
  }
  const double residual = target.gradient(theta).norm();
  if (residual < std::sqrt(tol)) return theta;
  throw NonConvergenceError(residual, "logistic_map: Newton did not converge");
}

ArrhythmiaData load_arrhythmia(const ArrhythmiaConfig& cfg) {
  if (cfg.features < 1) throw ConfigError("arrhythmia: feature count must be >= 1");
  if (!(cfg.prior_precision > 0.0)) throw ConfigError("arrhythmia: prior precision must be > 0");
  std::ifstream file(cfg.csv_path, std::ios::binary);
  if (!file) throw ConfigError("arrhythmia: cannot open " + cfg.csv_path.string());
  std::stringstream buffer;
  buffer << file.rdbuf();
  const std::string bytes = buffer.str();

  LogisticTarget::Options opts;
  opts.prior_precision = cfg.prior_precision;
  opts.rho = cfg.rho;

  const std::string hash = config_fingerprint(cfg, bytes);
  std::istringstream parse_stream(bytes);
  const RawTable raw = parse_arrhythmia_csv(parse_stream);
  const Eigen::Index n = raw.features.rows();
  const Eigen::Index m = raw.features.cols();

  Vector labels(n);
  Eigen::Index positives = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    labels(i) = raw.classes[static_cast<std::size_t>(i)] == cfg.absence_class ? 0.0 : 1.0;
    positives += labels(i) == 1.0 ? 1 : 0;
  }

  if (cfg.cache_dir) {
    if (auto cached = read_cache(*cfg.cache_dir, hash)) {
      opts.center = cached->center;
      return {LogisticTarget(std::move(cached->design), std::move(cached->labels), opts),
              std::move(cached->selected), positives, n - positives, true};
    }
  }

  // Imputation; a column is usable only if it ends up non-constant.
  Matrix filled = raw.features;
  std::vector<bool> usable(static_cast<std::size_t>(m), true);
  for (Eigen::Index j = 0; j < m; ++j) {
    std::vector<double> present;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!std::isnan(filled(i, j))) present.push_back(filled(i, j));
    const bool any_missing = static_cast<Eigen::Index>(present.size()) < n;
    if (present.empty() || (any_missing && cfg.missing == MissingPolicy::drop_column)) {
      usable[static_cast<std::size_t>(j)] = false;
      filled.col(j).setZero();
      continue;
    }
    if (any_missing) {
      const double med = median_of(present);
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::isnan(filled(i, j))) filled(i, j) = med;
    }
  }

  // Point-biserial correlation equals the Pearson correlation with the 0/1 label.
  const double ybar = labels.mean();
  const Vector yc = labels.array() - ybar;
  const double ynorm = yc.norm();
  std::vector<double> score(static_cast<std::size_t>(m), 0.0);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Vector xc = filled.col(j).array() - filled.col(j).mean();
    const double xnorm = xc.norm();
    if (!(xnorm > 1e-12 * std::max(1.0, filled.col(j).cwiseAbs().maxCoeff()))) {
      usable[static_cast<std::size_t>(j)] = false;
      continue;
    }
    score[static_cast<std::size_t>(j)] = ynorm > 0.0 ? std::abs(xc.dot(yc)) / (xnorm * ynorm) : 0.0;
  }
  std::vector<Eigen::Index> candidates;
  for (Eigen::Index j = 0; j < m; ++j)
    if (usable[static_cast<std::size_t>(j)]) candidates.push_back(j);
  if (static_cast<Eigen::Index>(candidates.size()) < cfg.features)
    throw ConfigError("arrhythmia: requested " + std::to_string(cfg.features) +
                      " features but only " + std::to_string(candidates.size()) + " are usable");

  // Seeded priority for exact ties.
  std::vector<std::uint64_t> priority(static_cast<std::size_t>(m));
  {
    Rng rng(cfg.seed);
    for (auto& v : priority) v = rng.engine()();
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double sa = score[static_cast<std::size_t>(a)];
    const double sb = score[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return priority[static_cast<std::size_t>(a)] < priority[static_cast<std::size_t>(b)];
  });
  candidates.resize(static_cast<std::size_t>(cfg.features));

  Matrix design(n, cfg.features);
  for (Eigen::Index k = 0; k < cfg.features; ++k) {
    Vector col = filled.col(candidates[static_cast<std::size_t>(k)]);
    if (cfg.zscore) {
      const double mean = col.mean();
      col.array() -= mean;
      const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n));
      col /= sd;
    }
    design.col(k) = col;
  }

  Vector center = Vector::Zero(cfg.features);
  if (cfg.center == CenterPolicy::map) {
    const LogisticTarget prior_centered(design, labels, opts);
    center = logistic_map(prior_centered);
  }
  if (cfg.cache_dir) write_cache(*cfg.cache_dir, hash, {design, labels, center, candidates});
  opts.center = center;
  return {LogisticTarget(std::move(design), std::move(labels), opts), std::move(candidates), positives,
          n - positives, false};
}

// ---------------------------------------------------------------- linear regression

LinearRegressionTarget gen_linear_regression_data(Eigen::Index dimension, Eigen::Index n,
                                                  const Matrix& covariance,
                                                  std::optional<double> norm_bound,
                                                  std::uint64_t seed) {
  if (dimension < 1 || n < 1) throw ConfigError("linear regression data: need d >= 1 and n >= 1");
  if (covariance.rows() != dimension || covariance.cols() != dimension)
    throw ConfigError("linear regression data: covariance must be d x d");
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) throw MatrixError("linear regression data: covariance is not SPD");
  const Matrix lower = llt.matrixL();
  if (norm_bound && !(*norm_bound > 0.0)) throw ConfigError("linear regression data: R must be > 0");

  Rng rng(seed);
  Matrix x(n, dimension);
  Eigen::Index accepted = 0;
  long long attempts = 0;
  Vector z(dimension);
  while (accepted < n) {
    for (Eigen::Index k = 0; k < dimension; ++k) z(k) = rng.normal();
    const Vector draw = lower * z;
    ++attempts;
    if (!norm_bound || draw.squaredNorm() <= *norm_bound) x.row(accepted++) = draw.transpose();
    if (attempts >= 1000 && static_cast<double>(accepted) < 0.01 * static_cast<double>(attempts))
      throw ConfigError("linear regression data: norm bound R = " + std::to_string(*norm_bound) +
                        " accepts fewer than 1% of draws");
  }
  return LinearRegressionTarget(std::move(x), norm_bound, covariance);
}

}  // namespace lrvi
