#include "lrvi/trace.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lrvi/errors.hpp"

namespace lrvi {

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t row, std::size_t col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(row, col, "trace CSV: bad number '" + s + "'");
  }
}

}  // namespace

void RunTrace::charge(long long evals) {
  if (evals < 0) throw ContractError("RunTrace: negative gradient charge");
  grad_evals_ += evals;
}

void RunTrace::record(long iter, std::optional<Vector> rayleigh, std::optional<double> kl,
                      std::optional<double> frob_err) {
  append({iter, grad_evals_, std::move(rayleigh), kl, frob_err});
}

void RunTrace::append(TraceRecord rec) {
  if (!records_.empty() && rec.grad_evals <= records_.back().grad_evals)
    throw ContractError("RunTrace: gradient evaluations must strictly increase between records");
  records_.push_back(std::move(rec));
}

std::string trace_csv_header(Eigen::Index rank) {
  std::string h = "iter,grad_evals";
  for (Eigen::Index k = 1; k <= rank; ++k) h += ",rq_" + std::to_string(k);
  h += ",kl,frob_err";
  return h;
}

void RunTrace::write_csv(std::ostream& out, Eigen::Index rank) const {
  out << trace_csv_header(rank) << '\n';
  for (const auto& r : records_) {
    out << r.iter << ',' << r.grad_evals;
    for (Eigen::Index k = 0; k < rank; ++k) {
      out << ',';
      if (r.rayleigh && k < r.rayleigh->size()) out << format_number((*r.rayleigh)(k));
    }
    out << ',';
    if (r.kl) out << format_number(*r.kl);
    out << ',';
    if (r.frob_err) out << format_number(*r.frob_err);
    out << '\n';
  }
}

void RunTrace::write_csv(const std::filesystem::path& path, Eigen::Index rank) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_csv(out, rank);
}

RunTrace RunTrace::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, 0, "trace CSV: missing header");
  const auto header = split_fields(line);
  if (header.size() < 4 || header[0] != "iter" || header[1] != "grad_evals" ||
      header[header.size() - 2] != "kl" || header.back() != "frob_err")
    throw ParseError(1, 0, "trace CSV: unexpected header '" + line + "'");
  const std::size_t rank = header.size() - 4;
  for (std::size_t k = 0; k < rank; ++k) {
    if (header[2 + k] != "rq_" + std::to_string(k + 1))
      throw ParseError(1, 3 + k, "trace CSV: expected column rq_" + std::to_string(k + 1));
  }

  RunTrace trace;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size())
      throw ParseError(row, 0, "trace CSV: expected " + std::to_string(header.size()) + " fields");
    TraceRecord rec;
    rec.iter = static_cast<long>(parse_double(f[0], row, 1));
    rec.grad_evals = static_cast<long long>(parse_double(f[1], row, 2));
    bool any_rq = false;
    Vector rq = Vector::Constant(static_cast<Eigen::Index>(rank), NAN);
    for (std::size_t k = 0; k < rank; ++k) {
      if (f[2 + k].empty()) continue;
      rq(static_cast<Eigen::Index>(k)) = parse_double(f[2 + k], row, 3 + k);
      any_rq = true;
    }
    if (any_rq) rec.rayleigh = rq;
    if (!f[2 + rank].empty()) rec.kl = parse_double(f[2 + rank], row, 3 + rank);
    if (!f[3 + rank].empty()) rec.frob_err = parse_double(f[3 + rank], row, 4 + rank);
    trace.append(std::move(rec));
  }
  if (!trace.records_.empty()) trace.grad_evals_ = trace.records_.back().grad_evals;
  return trace;
}

RunTrace RunTrace::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_csv(in);
}

}  // namespace lrvi
