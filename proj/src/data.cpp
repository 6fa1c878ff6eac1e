#include "wclab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

namespace wclab {

void Dataset::validate() const {
  if (X.rows() < 1 || X.cols() < 1) throw std::invalid_argument("dataset: N >= 1 and d >= 1 required");
  if (y.size() != X.rows()) throw std::invalid_argument("dataset: label count mismatch");
  if (!X.allFinite()) throw std::invalid_argument("dataset: non-finite feature");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 1.0 && y[i] != -1.0)
      throw std::invalid_argument("dataset: label not in {-1,+1} at row " + std::to_string(i));
}

std::uint64_t Dataset::content_hash() const {
  std::uint64_t h = hash_matrix(X);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double v = y[i];
    h = fnv1a(&v, sizeof(v), h);
  }
  return h;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_field(const std::string& field, int row, int col) {
  std::string s = field;
  // from_chars rejects a leading '+', which label columns commonly carry
  if (!s.empty() && s.front() == '+') s.erase(s.begin());
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    std::ostringstream os;
    os << "csv: malformed field at row " << row << ", column " << col << ": '" << field << "'";
    throw std::invalid_argument(os.str());
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path, int label_column, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  bool first = true;
  std::size_t ncols = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && has_header) {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (rows.empty()) {
      ncols = fields.size();
      if (label_column < 0 || static_cast<std::size_t>(label_column) >= ncols)
        throw std::invalid_argument("csv: label column " + std::to_string(label_column) +
                                    " out of range for " + std::to_string(ncols) + " columns");
    } else if (fields.size() != ncols) {
      throw std::invalid_argument("csv: malformed row " + std::to_string(lineno) +
                                  " (field count mismatch)");
    }
    std::vector<double> vals(ncols);
    for (std::size_t c = 0; c < ncols; ++c) vals[c] = parse_field(fields[c], lineno, static_cast<int>(c));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::invalid_argument("csv: empty file " + path);
  if (ncols < 2) throw std::invalid_argument("csv: need at least one feature column");

  std::set<double> raw_labels;
  for (const auto& r : rows) raw_labels.insert(r[label_column]);
  if (raw_labels.size() > 2)
    throw std::invalid_argument("csv: more than two distinct labels (" +
                                std::to_string(raw_labels.size()) + ")");
  // Two-class coding: numerically smaller raw label maps to -1.
  const double lo = *raw_labels.begin();
  if (raw_labels.size() == 1 && lo != 1.0 && lo != -1.0)
    throw std::invalid_argument("csv: single label value, cannot infer two-class coding");

  Dataset ds;
  ds.name = path;
  const Eigen::Index N = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = static_cast<Eigen::Index>(ncols - 1);
  ds.X.resize(N, d);
  ds.y.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::Index k = 0;
    for (std::size_t c = 0; c < ncols; ++c) {
      if (static_cast<int>(c) == label_column) continue;
      ds.X(i, k++) = rows[i][c];
    }
    double raw = rows[i][label_column];
    ds.y[i] = raw_labels.size() == 1 ? raw : (raw == lo ? -1.0 : 1.0);
  }
  ds.validate();
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("csv: cannot write " + path);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index k = 0; k < ds.dim(); ++k) out << format_double(ds.X(i, k)) << ',';
    out << format_double(ds.y[i]) << '\n';
  }
}

CovarianceSummary empirical_covariance(const Dataset& ds) {
  ds.validate();
  CovarianceSummary cov;
  Matrix s = (ds.X.transpose() * ds.X) / static_cast<double>(ds.size());
  cov.sigma_hat = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov.sigma_hat, Eigen::EigenvaluesOnly);
  cov.spectral_norm = std::max(0.0, eig.eigenvalues().maxCoeff());
  cov.trace = cov.sigma_hat.trace();
  return cov;
}

SynthResult synth_teacher(const TeacherSpec& spec) {
  if (spec.mu < 0.0 || spec.mu > 1.0) throw std::invalid_argument("teacher: mu must lie in [0,1]");
  if (spec.c < 0.5 || spec.c > 1.0) throw std::invalid_argument("teacher: c must lie in [1/2,1]");
  if (spec.M_star < 1 || spec.d < 1) throw std::invalid_argument("teacher: M_star >= 1, d >= 1");
  if (spec.N_train < 1 || spec.N_test < 1) throw std::invalid_argument("teacher: sample counts >= 1");

  const double target = std::pow(static_cast<double>(spec.M_star), 0.5 - spec.mu);

  TwoLayerParams teacher;
  teacher.c = spec.c;
  teacher.train_second_layer = true;
  bool ok = false;
  for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
    auto rng = make_rng(mix_seed(spec.seed, static_cast<std::uint64_t>(attempt)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    teacher.A.resize(spec.M_star, spec.d);
    for (Eigen::Index r = 0; r < teacher.A.rows(); ++r)
      for (Eigen::Index k = 0; k < teacher.A.cols(); ++k) teacher.A(r, k) = gauss(rng);
    teacher.v.resize(spec.M_star);
    std::uniform_int_distribution<int> sign(0, 1);
    for (Eigen::Index j = 0; j < teacher.v.size(); ++j) teacher.v[j] = sign(rng) ? 1.0 : -1.0;
    double norm = teacher.A.norm();
    if (norm > 0.0) {
      teacher.A *= target / norm;
      ok = true;
    }
  }
  if (!ok) throw std::runtime_error("teacher: degenerate zero-norm draw after 10 attempts");

  Activation act{Activation::Kind::sigmoid};
  auto rng = make_rng(mix_seed(spec.seed, 0xDA7AULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw = [&](int n, const std::string& name) {
    Dataset ds;
    ds.name = name;
    ds.X.resize(n, spec.d);
    ds.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < spec.d; ++k) ds.X(i, k) = gauss(rng);
      double f = forward(teacher, act, ds.X.row(i).transpose());
      if (spec.label_noise) {
        double prob = 1.0 / (1.0 + std::exp(-f));
        ds.y[i] = unif(rng) < prob ? 1.0 : -1.0;
      } else {
        ds.y[i] = f >= 0.0 ? 1.0 : -1.0;
      }
    }
    return ds;
  };
  SynthResult out{draw(spec.N_train, "teacher_train"), draw(spec.N_test, "teacher_test"), teacher};
  return out;
}

Dataset subsample(const Dataset& ds, int n, std::uint64_t seed) {
  ds.validate();
  if (n < 1 || n > ds.size())
    throw std::invalid_argument("subsample: n out of range");
  std::vector<Eigen::Index> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed);
  // Fisher-Yates prefix of length n
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, ds.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  Dataset out;
  out.name = ds.name + "#sub" + std::to_string(n);
  out.X.resize(n, ds.dim());
  out.y.resize(n);
  for (int i = 0; i < n; ++i) {
    out.X.row(i) = ds.X.row(idx[i]);
    out.y[i] = ds.y[idx[i]];
  }
  return out;
}

Dataset standardize_columns(const Dataset& ds) {
  ds.validate();
  Dataset out = ds;
  for (Eigen::Index k = 0; k < ds.dim(); ++k) {
    double mean = ds.X.col(k).mean();
    double var = (ds.X.col(k).array() - mean).square().sum() / static_cast<double>(ds.size());
    double sd = std::sqrt(var);
    if (sd > 0) out.X.col(k) = ds.X.col(k) / sd;
  }
  return out;
}

}  // namespace wclab
