#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>

#include "clmm/fit.hpp"
#include "clmm/inference.hpp"
#include "clmm/rng.hpp"

namespace clmm {

enum class SizeRule { balanced, unbalanced_total, explicit_sizes };
enum class CovariateLaw { iid_standard, toeplitz, correlated_pair, explicit_sigma };
enum class CiMethods { none, classical, fixedm, both };

// One simulation design: generating model, cluster layout, candidate model
// to fit, and study controls.
struct Scenario {
  int m = 1;
  SizeRule size_rule = SizeRule::balanced;
  int n = 0;             // balanced cluster size
  long long N_total = 0; // unbalanced total size
  std::vector<int> sizes;  // explicit layout
  int p = 0;
  int q = 0;
  TrueParams truth;
  CovariateLaw law = CovariateLaw::iid_standard;
  double rho_x = 0.0;  // toeplitz base; correlated-pair cross product of the two x columns
  double rho_z = 0.0;  // toeplitz base; correlated-pair cross product of the two z columns
  MatrixXd sigma_x, sigma_z;  // explicit_sigma law only (p x p, q x q)
  ModelSpec fit_spec;
  int replications = 100;
  std::uint64_t seed = 1;
  double level = 0.95;
  CiMethods methods = CiMethods::both;

  void check() const;  // throws ScenarioError
  // Resolves the size rule. Unbalanced uses n_1 = [N^{1/4}], n_2 = [N^{3/4}],
  // n_3..n_{m-1} = [(N - n_1 - n_2)/(m - 2)], n_m = remainder, with [.] the
  // nearest integer.
  std::vector<int> cluster_sizes() const;
};

// key = value lines; '#' starts a comment. Unknown keys are rejected.
Scenario parse_scenario(std::istream& in, const std::string& name = "<stream>");
Scenario parse_scenario_file(const std::string& path);

struct Replicate {
  Dataset data;
  MatrixXd b_true;  // m x q random-effect draws
};

// Deterministic in (scenario.seed, replicate_index). Draw order per cluster:
// X rows, Z rows, b, epsilon.
Replicate generate(const Scenario& scenario, int replicate_index);

struct ReplicateRecord {
  int replicate = 0;
  bool ok = false;
  bool has_fit = false;  // false when the fit threw; `fit` is then empty
  std::string failure;   // non-empty when !ok
  MLFit fit;
  VectorXd bsq_mean;  // (1/m) sum_i b_{i,k}^2 for k in gamma
  std::vector<ConfidenceInterval> classical, fixedm;
  std::vector<bool> classical_covered, fixedm_covered;
};

struct StudySummary {
  Scenario scenario;
  int completed = 0;
  int failed = 0;
  std::vector<std::string> estimands;  // "sigma2_<k>" per k in gamma, then "v2"
  VectorXd mean, sd;
  // Coverage of the true sigma_k^2, per method, aligned with gamma.
  VectorXd classical_coverage, classical_se;
  VectorXd fixedm_coverage, fixedm_se;
  std::vector<ReplicateRecord> raw;
};

// Fits every replicate, aggregates estimates and coverage. Replicates run on
// `threads` workers; output is identical for any thread count. Throws
// StudyError if more than 1% of replicates fail.
StudySummary run_study(const Scenario& scenario, int threads = 1);

void write_summary_csv(const StudySummary& s, std::ostream& out);
void write_raw_csv(const StudySummary& s, std::ostream& out);

}  // namespace clmm
