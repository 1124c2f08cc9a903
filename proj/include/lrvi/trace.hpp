#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lrvi/linalg.hpp"
#include "lrvi/lowrank_gaussian.hpp"

namespace lrvi {

struct TraceRecord {
  long iter = 0;
  long long grad_evals = 0;
  std::optional<Vector> rayleigh;
  std::optional<double> kl;
  std::optional<double> frob_err;
};

/// Per-iteration diagnostics of one run. Gradient evaluations are charged
/// explicitly by the algorithms (one per call to grad psi, subject to the
/// stage-2 convention in SviConfig) and snapshotted into each record.
class RunTrace {
 public:
  void charge(long long evals);
  long long grad_evals() const { return grad_evals_; }

  /// Appends a record stamped with the current count. Throws ContractError if
  /// the count did not increase since the previous record.
  void record(long iter, std::optional<Vector> rayleigh = std::nullopt,
              std::optional<double> kl = std::nullopt,
              std::optional<double> frob_err = std::nullopt);
  /// Appends a pre-built record (used when merging or re-reading traces).
  void append(TraceRecord rec);

  void warn(std::string message) { warnings_.push_back(std::move(message)); }

  const std::vector<TraceRecord>& records() const { return records_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::optional<LowRankGaussian> final_state;
  /// sigma_min(U_p^T U_0) against the oracle eigenbasis, when one is attached.
  std::optional<double> initial_overlap;

  /// Columns: iter,grad_evals,rq_1..rq_p,kl,frob_err. Absent values are empty.
  void write_csv(std::ostream& out, Eigen::Index rank) const;
  void write_csv(const std::filesystem::path& path, Eigen::Index rank) const;
  /// Inverse of write_csv. Throws ParseError on malformed input.
  static RunTrace read_csv(std::istream& in);
  static RunTrace read_csv(const std::filesystem::path& path);

 private:
  long long grad_evals_ = 0;
  std::vector<TraceRecord> records_;
  std::vector<std::string> warnings_;
};

/// Header line written by RunTrace::write_csv, without the trailing newline.
std::string trace_csv_header(Eigen::Index rank);

}  // namespace lrvi
