#include "clmm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace clmm {

namespace {

bool all_finite(const MatrixXd& a) { return a.allFinite(); }

}  // namespace

Dataset::Dataset(std::vector<Cluster> clusters) : clusters_(std::move(clusters)) {
  if (clusters_.empty()) throw DimensionError("dataset needs at least one cluster");
  p_ = static_cast<int>(clusters_.front().X.cols());
  q_ = static_cast<int>(clusters_.front().Z.cols());
  n_min_ = clusters_.front().rows();
  n_max_ = n_min_;
  for (const Cluster& c : clusters_) {
    const Eigen::Index n = c.rows();
    if (n < 1) throw DimensionError("cluster " + std::to_string(c.id) + " is empty");
    if (c.X.rows() != n || c.Z.rows() != n)
      throw DimensionError("cluster " + std::to_string(c.id) +
                           ": X/Z row counts do not match y");
    if (c.X.cols() != p_ || c.Z.cols() != q_)
      throw DimensionError("cluster " + std::to_string(c.id) +
                           ": column counts differ across clusters");
    total_ += n;
    n_min_ = std::min(n_min_, n);
    n_max_ = std::max(n_max_, n);
  }
}

VectorXd Dataset::stacked_y() const {
  VectorXd out(total_);
  Eigen::Index at = 0;
  for (const Cluster& c : clusters_) {
    out.segment(at, c.rows()) = c.y;
    at += c.rows();
  }
  return out;
}

void ModelSpec::check_ordering() const {
  auto ordered = [](const std::vector<int>& v) {
    for (size_t i = 0; i < v.size(); ++i) {
      if (v[i] < 1) return false;
      if (i > 0 && v[i] <= v[i - 1]) return false;
    }
    return true;
  };
  if (!ordered(alpha)) throw InvalidSpecError("alpha indices must be strictly increasing and >= 1");
  if (!ordered(gamma)) throw InvalidSpecError("gamma indices must be strictly increasing and >= 1");
}

void ModelSpec::check(const Dataset& data) const {
  check_ordering();
  if (!alpha.empty() && alpha.back() > data.p())
    throw InvalidSpecError("alpha index " + std::to_string(alpha.back()) +
                           " out of bounds (p = " + std::to_string(data.p()) + ")");
  if (!gamma.empty() && gamma.back() > data.q())
    throw InvalidSpecError("gamma index " + std::to_string(gamma.back()) +
                           " out of bounds (q = " + std::to_string(data.q()) + ")");
}

std::vector<int> ModelSpec::parse_indices(const std::string& text) {
  std::vector<int> out;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    size_t b = token.find_first_not_of(" \t");
    size_t e = token.find_last_not_of(" \t");
    if (b == std::string::npos) throw InvalidSpecError("empty index in list '" + text + "'");
    token = token.substr(b, e - b + 1);
    int value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
      throw InvalidSpecError("bad index '" + token + "'");
    out.push_back(value);
  }
  return out;
}

DesignView::DesignView(const Dataset& data, const ModelSpec& spec)
    : data_(&data), spec_(spec) {
  spec.check(data);
  xcols_.reserve(spec.alpha.size());
  for (int j : spec.alpha) xcols_.push_back(j - 1);
  zcols_.reserve(spec.gamma.size());
  for (int k : spec.gamma) zcols_.push_back(k - 1);
}

MatrixXd DesignView::x_matrix(int i) const {
  const Cluster& c = data_->cluster(i);
  MatrixXd out(c.rows(), p());
  for (int j = 0; j < p(); ++j) out.col(j) = x_col(i, j);
  return out;
}

MatrixXd DesignView::z_matrix(int i) const {
  const Cluster& c = data_->cluster(i);
  MatrixXd out(c.rows(), q());
  for (int s = 0; s < q(); ++s) out.col(s) = z_col(i, s);
  return out;
}

namespace {

// Gram matrix of the stacked, column-normalized design; zero columns are
// reported as exactly dependent.
void rank_check(const Dataset& data, const std::vector<int>& cols, bool use_x,
                bool* deficient, double* min_eig, std::vector<int>* dependent) {
  const int k = static_cast<int>(cols.size());
  *deficient = false;
  *min_eig = 0.0;
  if (k == 0) return;

  VectorXd norms = VectorXd::Zero(k);
  MatrixXd gram = MatrixXd::Zero(k, k);
  for (const Cluster& c : data.clusters()) {
    const MatrixXd& full = use_x ? c.X : c.Z;
    for (int a = 0; a < k; ++a) {
      norms[a] += full.col(cols[a] - 1).squaredNorm();
      for (int b = a; b < k; ++b)
        gram(a, b) += full.col(cols[a] - 1).dot(full.col(cols[b] - 1));
    }
  }
  for (int a = 0; a < k; ++a) {
    if (!(norms[a] > 0.0)) {
      *deficient = true;
      dependent->push_back(cols[a]);
    }
  }
  if (*deficient) return;

  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b) {
      gram(a, b) /= std::sqrt(norms[a] * norms[b]);
      gram(b, a) = gram(a, b);
    }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
  *min_eig = eig.eigenvalues().minCoeff();
  if (*min_eig < kRankEigTolerance) {
    *deficient = true;
    int idx = 0;
    eig.eigenvalues().minCoeff(&idx);
    VectorXd null_vec = eig.eigenvectors().col(idx);
    const double top = null_vec.cwiseAbs().maxCoeff();
    for (int a = 0; a < k; ++a)
      if (std::abs(null_vec[a]) > 0.3 * top) dependent->push_back(cols[a]);
  }
}

}  // namespace

ValidationReport validate(const Dataset& data, const ModelSpec& spec) {
  ValidationReport report;
  try {
    spec.check(data);
  } catch (const InvalidSpecError& e) {
    report.spec_problems.emplace_back(e.what());
    return report;
  }

  for (const Cluster& c : data.clusters()) {
    auto scan = [&](const MatrixXd& mat, const char* prefix, bool with_index) {
      if (all_finite(mat)) return;
      for (Eigen::Index r = 0; r < mat.rows(); ++r)
        for (Eigen::Index col = 0; col < mat.cols(); ++col)
          if (!std::isfinite(mat(r, col))) {
            NonFiniteEntry entry;
            entry.cluster_id = c.id;
            entry.row = static_cast<int>(r) + 1;
            entry.column = with_index ? prefix + std::to_string(col + 1) : prefix;
            report.non_finite.push_back(entry);
          }
    };
    scan(c.y, "y", false);
    scan(c.X, "x", true);
    scan(c.Z, "z", true);
  }
  if (!report.non_finite.empty()) return report;  // rank check needs finite data

  rank_check(data, spec.alpha, true, &report.x_rank_deficient, &report.x_gram_min_eig,
             &report.x_dependent_columns);
  rank_check(data, spec.gamma, false, &report.z_rank_deficient, &report.z_gram_min_eig,
             &report.z_dependent_columns);
  return report;
}

std::string ValidationReport::summary() const {
  if (ok()) return "ok";
  std::ostringstream out;
  for (const std::string& s : spec_problems) out << s << "; ";
  if (x_rank_deficient) {
    out << "rank-deficient X(alpha), columns";
    for (int c : x_dependent_columns) out << ' ' << c;
    out << "; ";
  }
  if (z_rank_deficient) {
    out << "rank-deficient Z(gamma), columns";
    for (int c : z_dependent_columns) out << ' ' << c;
    out << "; ";
  }
  if (!non_finite.empty()) {
    const NonFiniteEntry& e = non_finite.front();
    out << non_finite.size() << " non-finite entries, first at cluster "
        << e.cluster_id << " row " << e.row << " column " << e.column << "; ";
  }
  return out.str();
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    size_t b = field.find_first_not_of(" \t\r");
    size_t e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& token, long line, const std::string& what) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw CsvError("line " + std::to_string(line) + ": bad " + what + " value '" + token + "'",
                   line);
  if (!std::isfinite(value))
    throw CsvError("line " + std::to_string(line) + ": non-finite " + what + " value '" +
                       token + "'",
                   line);
  return value;
}

}  // namespace

Dataset read_csv(std::istream& in, const std::string& name) {
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw CsvError(name + ": empty file", 1);
  ++line_no;
  std::vector<std::string> header = split_line(line);
  if (header.size() < 2 || header[0] != "cluster" || header[1] != "y")
    throw CsvError(name + ": header must start with 'cluster,y'", 1);
  int p = 0, q = 0;
  size_t at = 2;
  while (at < header.size() && header[at] == "x" + std::to_string(p + 1)) {
    ++p;
    ++at;
  }
  while (at < header.size() && header[at] == "z" + std::to_string(q + 1)) {
    ++q;
    ++at;
  }
  if (at != header.size())
    throw CsvError(name + ": unexpected header column '" + header[at] + "'", 1);

  struct Rows {
    std::vector<double> y;
    std::vector<double> x;  // row-major
    std::vector<double> z;
  };
  std::map<long long, Rows> grouped;
  std::vector<long long> order;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields = split_line(line);
    if (static_cast<int>(fields.size()) != 2 + p + q)
      throw CsvError("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(2 + p + q) + " fields, got " +
                         std::to_string(fields.size()),
                     line_no);
    long long id = 0;
    auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), id);
    if (ec != std::errc() || ptr != fields[0].data() + fields[0].size())
      throw CsvError("line " + std::to_string(line_no) + ": bad cluster id '" + fields[0] + "'",
                     line_no);
    auto [it, inserted] = grouped.try_emplace(id);
    if (inserted) order.push_back(id);
    Rows& rows = it->second;
    rows.y.push_back(parse_double(fields[1], line_no, "y"));
    for (int j = 0; j < p; ++j)
      rows.x.push_back(parse_double(fields[2 + static_cast<size_t>(j)], line_no,
                                    "x" + std::to_string(j + 1)));
    for (int k = 0; k < q; ++k)
      rows.z.push_back(parse_double(fields[2 + static_cast<size_t>(p + k)], line_no,
                                    "z" + std::to_string(k + 1)));
  }
  if (order.empty()) throw CsvError(name + ": no data rows", line_no);

  std::vector<Cluster> clusters;
  clusters.reserve(order.size());
  for (long long id : order) {
    const Rows& rows = grouped[id];
    const Eigen::Index n = static_cast<Eigen::Index>(rows.y.size());
    Cluster c;
    c.id = id;
    c.y = Eigen::Map<const VectorXd>(rows.y.data(), n);
    c.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                         Eigen::RowMajor>>(rows.x.data(), n, p);
    c.Z = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                         Eigen::RowMajor>>(rows.z.data(), n, q);
    clusters.push_back(std::move(c));
  }
  return Dataset(std::move(clusters));
}

Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_csv(in, path);
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << "cluster,y";
  for (int j = 1; j <= data.p(); ++j) out << ",x" << j;
  for (int k = 1; k <= data.q(); ++k) out << ",z" << k;
  out << '\n';
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (const Cluster& c : data.clusters()) {
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      out << c.id;
      emit(c.y[r]);
      for (int j = 0; j < data.p(); ++j) emit(c.X(r, j));
      for (int k = 0; k < data.q(); ++k) emit(c.Z(r, k));
      out << '\n';
    }
  }
}

}  // namespace clmm
