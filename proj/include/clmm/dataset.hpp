#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "clmm/errors.hpp"

namespace clmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One cluster: n_i responses sharing a single draw of the random effects.
struct Cluster {
  long long id = 0;
  VectorXd y;   // length n_i
  MatrixXd X;   // n_i x p fixed-effect covariates
  MatrixXd Z;   // n_i x q random-effect covariates
  Eigen::Index rows() const { return y.size(); }
};

// Immutable collection of clusters with common p and q.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Cluster> clusters);

  const std::vector<Cluster>& clusters() const { return clusters_; }
  const Cluster& cluster(int i) const { return clusters_[static_cast<size_t>(i)]; }
  int m() const { return static_cast<int>(clusters_.size()); }
  long long total_rows() const { return total_; }  // N
  int p() const { return p_; }
  int q() const { return q_; }
  Eigen::Index n_min() const { return n_min_; }
  Eigen::Index n_max() const { return n_max_; }

  VectorXd stacked_y() const;

 private:
  std::vector<Cluster> clusters_;
  long long total_ = 0;
  int p_ = 0;
  int q_ = 0;
  Eigen::Index n_min_ = 0;
  Eigen::Index n_max_ = 0;
};

// Candidate model: 1-based, strictly increasing column subsets of X and Z.
struct ModelSpec {
  std::vector<int> alpha;  // subset of {1..p}
  std::vector<int> gamma;  // subset of {1..q}

  int p_alpha() const { return static_cast<int>(alpha.size()); }
  int q_gamma() const { return static_cast<int>(gamma.size()); }

  // Throws InvalidSpecError on out-of-bounds or non-increasing indices.
  void check(const Dataset& data) const;
  void check_ordering() const;

  bool operator==(const ModelSpec&) const = default;

  // Parses "1,2,3" (empty string -> empty set).
  static std::vector<int> parse_indices(const std::string& text);
};

// Parameters of the generating model.
struct TrueParams {
  VectorXd beta0;      // length p
  VectorXd sigma0_sq;  // length q, entries >= 0
  double v0_sq = 1.0;  // > 0

  VectorXd theta0() const { return sigma0_sq / v0_sq; }
};

// Column-subset view of X(alpha), Z(gamma); cluster order preserved, no copies
// on the column accessors.
class DesignView {
 public:
  DesignView(const Dataset& data, const ModelSpec& spec);
  DesignView(Dataset&&, const ModelSpec&) = delete;  // view keeps a reference

  const Dataset& data() const { return *data_; }
  const ModelSpec& spec() const { return spec_; }
  int p() const { return static_cast<int>(xcols_.size()); }
  int q() const { return static_cast<int>(zcols_.size()); }

  // j, s are 0-based positions within alpha/gamma.
  auto x_col(int i, int j) const { return data_->cluster(i).X.col(xcols_[static_cast<size_t>(j)]); }
  auto z_col(int i, int s) const { return data_->cluster(i).Z.col(zcols_[static_cast<size_t>(s)]); }

  MatrixXd x_matrix(int i) const;  // materialized X_i(alpha)
  MatrixXd z_matrix(int i) const;  // materialized Z_i(gamma)

 private:
  const Dataset* data_;
  ModelSpec spec_;
  std::vector<int> xcols_, zcols_;  // 0-based original columns
};

struct NonFiniteEntry {
  long long cluster_id = 0;
  int row = 0;              // 1-based within the cluster
  std::string column;       // "y", "x3", "z2", ...
};

// Diagnostics from validate(); never thrown.
struct ValidationReport {
  bool x_rank_deficient = false;
  bool z_rank_deficient = false;
  double x_gram_min_eig = 0.0;  // smallest eigenvalue of the normalized Gram
  double z_gram_min_eig = 0.0;
  std::vector<int> x_dependent_columns;  // 1-based original column indices
  std::vector<int> z_dependent_columns;
  std::vector<NonFiniteEntry> non_finite;
  std::vector<std::string> spec_problems;

  bool ok() const {
    return !x_rank_deficient && !z_rank_deficient && non_finite.empty() &&
           spec_problems.empty();
  }
  std::string summary() const;
};

// Rank threshold: smallest eigenvalue of the Gram matrix of the stacked,
// column-normalized design below this flags deficiency.
inline constexpr double kRankEigTolerance = 1e-10;

ValidationReport validate(const Dataset& data, const ModelSpec& spec);

// CSV with header `cluster,y,x1,...,xp,z1,...,zq`; rows may arrive in any
// order and are grouped by cluster id (first-appearance order kept).
Dataset read_csv(std::istream& in, const std::string& name = "<stream>");
Dataset read_csv_file(const std::string& path);

void write_csv(const Dataset& data, std::ostream& out);

}  // namespace clmm
