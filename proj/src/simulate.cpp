#include "clmm/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

namespace clmm {

void Scenario::check() const {
  if (m < 1) throw ScenarioError("m must be >= 1", "m");
  if (p < 0 || q < 0) throw ScenarioError("p and q must be >= 0", "p");
  if (replications < 1) throw ScenarioError("reps must be >= 1", "reps");
  if (!(level > 0.0 && level < 1.0)) throw ScenarioError("level must be in (0,1)", "level");
  if (!(truth.v0_sq > 0.0)) throw ScenarioError("v0_sq must be > 0", "v0_sq");
  if (truth.beta0.size() != p) throw ScenarioError("beta0 must have length p", "beta0");
  if (truth.sigma0_sq.size() != q)
    throw ScenarioError("sigma0_sq must have length q", "sigma0_sq");
  for (int k = 0; k < q; ++k)
    if (!(truth.sigma0_sq[k] >= 0.0))
      throw ScenarioError("sigma0_sq entries must be >= 0", "sigma0_sq");
  if (law == CovariateLaw::toeplitz || law == CovariateLaw::correlated_pair) {
    if (!(std::abs(rho_x) < 1.0) || !(std::abs(rho_z) < 1.0))
      throw ScenarioError("rho_x and rho_z must lie in (-1,1)", "rho_x");
  }
  if (law == CovariateLaw::correlated_pair && (p != 2 || q != 2))
    throw ScenarioError("correlated-pair law needs p = q = 2", "covariate_law");
  if (law == CovariateLaw::explicit_sigma) {
    if (sigma_x.rows() != p || sigma_x.cols() != p)
      throw ScenarioError("sigma_x must be p x p", "covariate_law");
    if (sigma_z.rows() != q || sigma_z.cols() != q)
      throw ScenarioError("sigma_z must be q x q", "covariate_law");
  }
  switch (size_rule) {
    case SizeRule::balanced:
      if (n < 1) throw ScenarioError("balanced size n must be >= 1", "n");
      break;
    case SizeRule::unbalanced_total:
      if (m < 3) throw ScenarioError("unbalanced rule needs m >= 3", "m");
      if (N_total < m) throw ScenarioError("N must be >= m", "N");
      break;
    case SizeRule::explicit_sizes:
      if (static_cast<int>(sizes.size()) != m)
        throw ScenarioError("explicit sizes must list one n_i per cluster", "sizes");
      for (int s : sizes)
        if (s < 1) throw ScenarioError("cluster sizes must be >= 1", "sizes");
      break;
  }
  fit_spec.check_ordering();
  if (!fit_spec.alpha.empty() && fit_spec.alpha.back() > p)
    throw ScenarioError("alpha index out of bounds", "alpha");
  if (!fit_spec.gamma.empty() && fit_spec.gamma.back() > q)
    throw ScenarioError("gamma index out of bounds", "gamma");
  (void)cluster_sizes();
}

std::vector<int> Scenario::cluster_sizes() const {
  std::vector<int> out;
  switch (size_rule) {
    case SizeRule::balanced:
      out.assign(static_cast<size_t>(m), n);
      break;
    case SizeRule::explicit_sizes:
      out = sizes;
      break;
    case SizeRule::unbalanced_total: {
      const double total = static_cast<double>(N_total);
      const long long n1 = std::llround(std::pow(total, 0.25));
      const long long n2 = std::llround(std::pow(total, 0.75));
      const long long mid = std::llround((total - n1 - n2) / (m - 2));
      long long used = n1 + n2;
      out.push_back(static_cast<int>(n1));
      out.push_back(static_cast<int>(n2));
      for (int i = 2; i < m - 1; ++i) {
        out.push_back(static_cast<int>(mid));
        used += mid;
      }
      out.push_back(static_cast<int>(N_total - used));
      break;
    }
  }
  for (int s : out)
    if (s < 1)
      throw ScenarioError("size rule yields a cluster with fewer than one row", "N");
  return out;
}

namespace {

MatrixXd covariate_factor(const Scenario& sc, int dim, double rho, const MatrixXd& given) {
  if (dim == 0) return MatrixXd();
  MatrixXd sigma;
  if (sc.law == CovariateLaw::explicit_sigma) {
    sigma = given;
  } else {
    if (sc.law == CovariateLaw::iid_standard || rho == 0.0)
      return MatrixXd::Identity(dim, dim);
    sigma.resize(dim, dim);
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) sigma(a, b) = std::pow(rho, std::abs(a - b));
  }
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw ScenarioError("covariate covariance is not positive definite", "covariate_law");
  return llt.matrixL();
}

}  // namespace

Replicate generate(const Scenario& sc, int replicate_index) {
  sc.check();
  const std::vector<int> sizes = sc.cluster_sizes();
  const MatrixXd lx = covariate_factor(sc, sc.p, sc.rho_x, sc.sigma_x);
  const MatrixXd lz = covariate_factor(sc, sc.q, sc.rho_z, sc.sigma_z);
  const double eps_sd = std::sqrt(sc.truth.v0_sq);
  const VectorXd b_sd = sc.truth.sigma0_sq.cwiseSqrt();

  NormalStream rng(sc.seed, static_cast<std::uint64_t>(replicate_index));
  auto draw = [&](Eigen::Index len) {
    VectorXd g(len);
    for (Eigen::Index t = 0; t < len; ++t) g[t] = rng.normal();
    return g;
  };

  Replicate rep;
  rep.b_true.resize(sc.m, sc.q);
  std::vector<Cluster> clusters;
  clusters.reserve(static_cast<size_t>(sc.m));
  for (int i = 0; i < sc.m; ++i) {
    const int n = sizes[static_cast<size_t>(i)];
    Cluster c;
    c.id = i + 1;
    c.X.resize(n, sc.p);
    for (int r = 0; r < n; ++r) c.X.row(r) = (lx * draw(sc.p)).transpose();
    c.Z.resize(n, sc.q);
    for (int r = 0; r < n; ++r) c.Z.row(r) = (lz * draw(sc.q)).transpose();
    const VectorXd b = b_sd.cwiseProduct(draw(sc.q));
    rep.b_true.row(i) = b.transpose();
    const VectorXd eps = eps_sd * draw(n);
    c.y = c.Z * b + eps;
    if (sc.p > 0) c.y.noalias() += c.X * sc.truth.beta0;
    clusters.push_back(std::move(c));
  }
  rep.data = Dataset(std::move(clusters));
  return rep;
}

namespace {

ReplicateRecord run_one(const Scenario& sc, int r) {
  ReplicateRecord rec;
  rec.replicate = r;
  try {
    const Replicate rep = generate(sc, r);
    rec.fit = fit(rep.data, sc.fit_spec);
    rec.has_fit = true;

    const int qg = sc.fit_spec.q_gamma();
    rec.bsq_mean.resize(qg);
    for (int s = 0; s < qg; ++s) {
      const int k = sc.fit_spec.gamma[static_cast<size_t>(s)];
      rec.bsq_mean[s] = rep.b_true.col(k - 1).squaredNorm() / sc.m;
    }

    const bool want_classical =
        sc.methods == CiMethods::classical || sc.methods == CiMethods::both;
    const bool want_fixedm =
        sc.methods == CiMethods::fixedm || sc.methods == CiMethods::both;
    for (int s = 0; s < qg; ++s) {
      const int k = sc.fit_spec.gamma[static_cast<size_t>(s)];
      const double truth_k = sc.truth.sigma0_sq[k - 1];
      if (want_classical) {
        ConfidenceInterval ci = classical_interval(rec.fit, sc.m, k, sc.level);
        rec.classical_covered.push_back(ci.lower <= truth_k && truth_k <= ci.upper);
        rec.classical.push_back(ci);
      }
      if (want_fixedm) {
        ConfidenceInterval ci = fixed_m_interval(rec.fit, sc.m, k, sc.level);
        rec.fixedm_covered.push_back(ci.lower <= truth_k && truth_k <= ci.upper);
        rec.fixedm.push_back(ci);
      }
    }
    if (!rec.fit.converged) {
      rec.failure = "non-convergence";
      rec.ok = false;
    } else {
      rec.ok = true;
    }
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.failure = e.what();
  }
  return rec;
}

}  // namespace

StudySummary run_study(const Scenario& sc, int threads) {
  sc.check();
  const int total = sc.replications;
  std::vector<ReplicateRecord> records(static_cast<size_t>(total));

  threads = std::clamp(threads, 1, total);
  std::atomic<int> cursor{0};
  auto worker = [&]() {
    for (;;) {
      const int r = cursor.fetch_add(1);
      if (r >= total) break;
      records[static_cast<size_t>(r)] = run_one(sc, r);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  StudySummary out;
  out.scenario = sc;
  const int qg = sc.fit_spec.q_gamma();
  for (int s = 0; s < qg; ++s)
    out.estimands.push_back("sigma2_" +
                            std::to_string(sc.fit_spec.gamma[static_cast<size_t>(s)]));
  out.estimands.emplace_back("v2");

  const int dims = qg + 1;
  VectorXd sum = VectorXd::Zero(dims), sum_sq = VectorXd::Zero(dims);
  VectorXd cls_hits = VectorXd::Zero(qg), fm_hits = VectorXd::Zero(qg);
  for (const ReplicateRecord& rec : records) {
    if (!rec.ok) {
      ++out.failed;
      continue;
    }
    ++out.completed;
    VectorXd est(dims);
    est.head(qg) = rec.fit.sigma2_hat;
    est[qg] = rec.fit.v2_hat;
    sum += est;
    sum_sq += est.cwiseProduct(est);
    for (int s = 0; s < static_cast<int>(rec.classical_covered.size()); ++s)
      cls_hits[s] += rec.classical_covered[static_cast<size_t>(s)] ? 1.0 : 0.0;
    for (int s = 0; s < static_cast<int>(rec.fixedm_covered.size()); ++s)
      fm_hits[s] += rec.fixedm_covered[static_cast<size_t>(s)] ? 1.0 : 0.0;
  }
  if (out.failed > 0.01 * total)
    throw StudyError(std::to_string(out.failed) + " of " + std::to_string(total) +
                     " replicates failed");

  const double count = std::max(1, out.completed);
  out.mean = sum / count;
  out.sd = VectorXd::Zero(dims);
  if (out.completed > 1)
    out.sd = ((sum_sq - sum.cwiseProduct(sum) / count) / (count - 1.0))
                 .cwiseMax(0.0)
                 .cwiseSqrt();

  auto coverage_of = [&](const VectorXd& hits, VectorXd* se) {
    VectorXd p_hat = hits / count;
    *se = (p_hat.array() * (1.0 - p_hat.array()) / count).sqrt().matrix();
    return p_hat;
  };
  const bool want_classical =
      sc.methods == CiMethods::classical || sc.methods == CiMethods::both;
  const bool want_fixedm = sc.methods == CiMethods::fixedm || sc.methods == CiMethods::both;
  if (want_classical) out.classical_coverage = coverage_of(cls_hits, &out.classical_se);
  if (want_fixedm) out.fixedm_coverage = coverage_of(fm_hits, &out.fixedm_se);

  out.raw = std::move(records);
  return out;
}

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[40];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

void write_summary_csv(const StudySummary& s, std::ostream& out) {
  out << "stat";
  for (const std::string& e : s.estimands) out << ',' << e;
  out << '\n';
  auto row = [&](const char* name, const VectorXd& values, bool pad_last) {
    out << name;
    for (int i = 0; i < values.size(); ++i) out << ',' << fmt(values[i], "%.6g");
    if (pad_last) out << ',';
    out << '\n';
  };
  row("mean", s.mean, false);
  row("sd", s.sd, false);
  if (s.classical_coverage.size() > 0) {
    row("coverage_classical", s.classical_coverage, true);
    row("coverage_classical_se", s.classical_se, true);
  }
  if (s.fixedm_coverage.size() > 0) {
    row("coverage_fixedm", s.fixedm_coverage, true);
    row("coverage_fixedm_se", s.fixedm_se, true);
  }
  out << "completed," << s.completed;
  for (size_t i = 1; i < s.estimands.size(); ++i) out << ',';
  out << '\n';
  out << "failed," << s.failed;
  for (size_t i = 1; i < s.estimands.size(); ++i) out << ',';
  out << '\n';
}

void write_raw_csv(const StudySummary& s, std::ostream& out) {
  const Scenario& sc = s.scenario;
  const std::vector<int>& gamma = sc.fit_spec.gamma;
  const std::vector<int>& alpha = sc.fit_spec.alpha;
  const bool want_classical =
      sc.methods == CiMethods::classical || sc.methods == CiMethods::both;
  const bool want_fixedm = sc.methods == CiMethods::fixedm || sc.methods == CiMethods::both;

  out << "replicate,ok,converged,iterations,neg2loglik,v2";
  for (int k : gamma) out << ",theta_" << k;
  for (int k : gamma) out << ",sigma2_" << k;
  for (int j : alpha) out << ",beta_" << j;
  for (int k : gamma) out << ",bsq_mean_" << k;
  auto ci_header = [&](const char* name) {
    for (int k : gamma)
      out << ',' << name << "_lower_" << k << ',' << name << "_upper_" << k << ',' << name
          << "_covered_" << k;
  };
  if (want_classical) ci_header("classical");
  if (want_fixedm) ci_header("fixedm");
  out << '\n';

  const int qg = static_cast<int>(gamma.size());
  for (const ReplicateRecord& rec : s.raw) {
    out << rec.replicate << ',' << (rec.ok ? 1 : 0);
    if (!rec.has_fit) {
      const int ci_cols = 3 * qg * ((want_classical ? 1 : 0) + (want_fixedm ? 1 : 0));
      const int blanks = 4 + 3 * qg + static_cast<int>(alpha.size()) + ci_cols;
      for (int c = 0; c < blanks; ++c) out << ',';
      out << '\n';
      continue;
    }
    out << ',' << (rec.fit.converged ? 1 : 0) << ',' << rec.fit.iterations << ','
        << fmt(rec.fit.neg2loglik_min) << ',' << fmt(rec.fit.v2_hat);
    for (int v = 0; v < qg; ++v) out << ',' << fmt(rec.fit.theta_hat[v]);
    for (int v = 0; v < qg; ++v) out << ',' << fmt(rec.fit.sigma2_hat[v]);
    for (int v = 0; v < rec.fit.beta_hat.size(); ++v) out << ',' << fmt(rec.fit.beta_hat[v]);
    for (int v = 0; v < qg; ++v) out << ',' << fmt(rec.bsq_mean[v]);
    auto ci_cells = [&](const std::vector<ConfidenceInterval>& cis,
                        const std::vector<bool>& covered) {
      for (int v = 0; v < qg; ++v)
        out << ',' << fmt(cis[static_cast<size_t>(v)].lower) << ','
            << fmt(cis[static_cast<size_t>(v)].upper) << ','
            << (covered[static_cast<size_t>(v)] ? 1 : 0);
    };
    if (want_classical) ci_cells(rec.classical, rec.classical_covered);
    if (want_fixedm) ci_cells(rec.fixedm, rec.fixedm_covered);
    out << '\n';
  }
}

namespace {

double parse_real(const std::string& value, const std::string& key) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ScenarioError("bad numeric value '" + value + "' for key '" + key + "'", key);
  return out;
}

long long parse_int(const std::string& value, const std::string& key) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ScenarioError("bad integer value '" + value + "' for key '" + key + "'", key);
  return out;
}

VectorXd parse_real_list(const std::string& value, const std::string& key) {
  std::vector<double> items;
  std::string token;
  std::istringstream in(value);
  while (std::getline(in, token, ',')) items.push_back(parse_real(token, key));
  return Eigen::Map<const VectorXd>(items.data(), static_cast<Eigen::Index>(items.size()));
}

}  // namespace

Scenario parse_scenario(std::istream& in, const std::string& name) {
  Scenario sc;
  bool saw_n = false, saw_total = false;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ScenarioError(name + ":" + std::to_string(line_no) + ": expected 'key = value'");
    auto trim = [](std::string s) {
      const size_t x = s.find_first_not_of(" \t\r");
      if (x == std::string::npos) return std::string();
      const size_t y = s.find_last_not_of(" \t\r");
      return s.substr(x, y - x + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ScenarioError(name + ":" + std::to_string(line_no) + ": empty key or value", key);

    if (key == "m") {
      sc.m = static_cast<int>(parse_int(value, key));
    } else if (key == "n") {
      sc.n = static_cast<int>(parse_int(value, key));
      saw_n = true;
    } else if (key == "N") {
      sc.N_total = parse_int(value, key);
      saw_total = true;
    } else if (key == "p") {
      sc.p = static_cast<int>(parse_int(value, key));
    } else if (key == "q") {
      sc.q = static_cast<int>(parse_int(value, key));
    } else if (key == "beta0") {
      sc.truth.beta0 = parse_real_list(value, key);
    } else if (key == "sigma0_sq") {
      sc.truth.sigma0_sq = parse_real_list(value, key);
    } else if (key == "v0_sq") {
      sc.truth.v0_sq = parse_real(value, key);
    } else if (key == "covariate_law") {
      if (value == "iid-standard")
        sc.law = CovariateLaw::iid_standard;
      else if (value == "toeplitz")
        sc.law = CovariateLaw::toeplitz;
      else if (value == "correlated-pair")
        sc.law = CovariateLaw::correlated_pair;
      else
        throw ScenarioError("unknown covariate_law '" + value + "'", key);
    } else if (key == "rho_x") {
      sc.rho_x = parse_real(value, key);
    } else if (key == "rho_z") {
      sc.rho_z = parse_real(value, key);
    } else if (key == "alpha") {
      sc.fit_spec.alpha = ModelSpec::parse_indices(value);
    } else if (key == "gamma") {
      sc.fit_spec.gamma = ModelSpec::parse_indices(value);
    } else if (key == "reps") {
      sc.replications = static_cast<int>(parse_int(value, key));
    } else if (key == "seed") {
      sc.seed = static_cast<std::uint64_t>(parse_int(value, key));
    } else if (key == "level") {
      sc.level = parse_real(value, key);
    } else if (key == "methods") {
      if (value == "none")
        sc.methods = CiMethods::none;
      else if (value == "classical")
        sc.methods = CiMethods::classical;
      else if (value == "fixedm")
        sc.methods = CiMethods::fixedm;
      else if (value == "both")
        sc.methods = CiMethods::both;
      else
        throw ScenarioError("unknown methods '" + value + "'", key);
    } else {
      throw ScenarioError(name + ":" + std::to_string(line_no) + ": unknown key '" + key + "'",
                          key);
    }
  }
  if (saw_n && saw_total)
    throw ScenarioError("give either n (balanced) or N (unbalanced), not both", "n");
  if (!saw_n && !saw_total) throw ScenarioError("one of n or N is required", "n");
  sc.size_rule = saw_n ? SizeRule::balanced : SizeRule::unbalanced_total;
  if (sc.truth.beta0.size() == 0 && sc.p > 0) sc.truth.beta0 = VectorXd::Zero(sc.p);
  if (sc.truth.sigma0_sq.size() == 0 && sc.q > 0)
    sc.truth.sigma0_sq = VectorXd::Zero(sc.q);
  sc.check();
  return sc;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_scenario(in, path);
}

}  // namespace clmm
