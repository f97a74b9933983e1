#include <cmath>
#include <sstream>

#include "clmm/simulate.hpp"
#include "doctest.h"

using namespace clmm;

namespace {

Scenario small_study() {
  Scenario sc;
  sc.m = 4;
  sc.size_rule = SizeRule::balanced;
  sc.n = 8;
  sc.p = 1;
  sc.q = 2;
  sc.truth.beta0 = VectorXd::Constant(1, 1.0);
  sc.truth.sigma0_sq = VectorXd(2);
  sc.truth.sigma0_sq << 0.8, 0.0;
  sc.truth.v0_sq = 1.0;
  sc.fit_spec = ModelSpec{{1}, {1, 2}};
  sc.replications = 24;
  sc.seed = 77;
  sc.level = 0.95;
  sc.methods = CiMethods::both;
  return sc;
}

}  // namespace

TEST_CASE("unbalanced size rule reproduces the reference layouts") {
  Scenario sc;
  sc.size_rule = SizeRule::unbalanced_total;
  SUBCASE("m = 10, N = 100") {
    sc.m = 10;
    sc.N_total = 100;
    const std::vector<int> sizes = sc.cluster_sizes();
    REQUIRE(sizes.size() == 10);
    long long total = 0;
    for (int s : sizes) total += s;
    CHECK(total == 100);
    CHECK(*std::min_element(sizes.begin(), sizes.end()) == 3);
    CHECK(*std::max_element(sizes.begin(), sizes.end()) == 32);
  }
  SUBCASE("m = 20, N = 400") {
    sc.m = 20;
    sc.N_total = 400;
    const std::vector<int> sizes = sc.cluster_sizes();
    CHECK(*std::min_element(sizes.begin(), sizes.end()) == 4);
    CHECK(*std::max_element(sizes.begin(), sizes.end()) == 89);
  }
  SUBCASE("m = 30, N = 900") {
    sc.m = 30;
    sc.N_total = 900;
    const std::vector<int> sizes = sc.cluster_sizes();
    long long total = 0;
    for (int s : sizes) total += s;
    CHECK(total == 900);
    CHECK(*std::min_element(sizes.begin(), sizes.end()) == 5);
    CHECK(*std::max_element(sizes.begin(), sizes.end()) == 164);
  }
}

TEST_CASE("normal stream sanity") {
  SUBCASE("deterministic per (seed, index)") {
    NormalStream a(123, 5), b(123, 5);
    for (int t = 0; t < 100; ++t) CHECK(a.normal() == b.normal());
  }
  SUBCASE("moments at 1e5 draws") {
    NormalStream s(2024, 0);
    const int k = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < k; ++t) {
      const double x = s.normal();
      sum += x;
      sum_sq += x * x;
    }
    const double mean = sum / k;
    const double var = sum_sq / k - mean * mean;
    CHECK(std::abs(mean) <= 4.0 / std::sqrt(static_cast<double>(k)));
    CHECK(var >= 0.95);
    CHECK(var <= 1.05);
  }
  SUBCASE("substreams are uncorrelated") {
    NormalStream a(9, 1), b(9, 2);
    const int k = 10000;
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (int t = 0; t < k; ++t) {
      const double x = a.normal(), y = b.normal();
      sa += x;
      sb += y;
      sab += x * y;
      saa += x * x;
      sbb += y * y;
    }
    const double cov = sab / k - (sa / k) * (sb / k);
    const double r = cov / std::sqrt((saa / k - sa / k * (sa / k)) *
                                     (sbb / k - sb / k * (sb / k)));
    CHECK(std::abs(r) <= 0.05);
  }
}

TEST_CASE("generate is deterministic and honours the truth") {
  Scenario sc = small_study();
  SUBCASE("same replicate twice is identical") {
    const Replicate a = generate(sc, 3);
    const Replicate b = generate(sc, 3);
    CHECK((a.b_true - b.b_true).lpNorm<Eigen::Infinity>() == 0.0);
    for (int i = 0; i < sc.m; ++i)
      CHECK((a.data.cluster(i).y - b.data.cluster(i).y).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("different replicates differ") {
    const Replicate a = generate(sc, 0);
    const Replicate b = generate(sc, 1);
    CHECK((a.b_true - b.b_true).lpNorm<Eigen::Infinity>() > 0.0);
  }
  SUBCASE("pure noise has unit variance") {
    Scenario noise = small_study();
    noise.m = 5;
    noise.n = 400;
    noise.p = 0;
    noise.truth.beta0 = VectorXd();
    noise.truth.sigma0_sq.setZero();
    noise.fit_spec.alpha.clear();
    const Replicate rep = generate(noise, 0);
    const VectorXd y = rep.data.stacked_y();
    const double n = static_cast<double>(y.size());
    const double var = y.squaredNorm() / n - std::pow(y.sum() / n, 2);
    CHECK(var == doctest::Approx(1.0).epsilon(0.08));
  }
  SUBCASE("explicit covariance law") {
    Scenario dep = small_study();
    dep.law = CovariateLaw::explicit_sigma;
    dep.sigma_x = MatrixXd::Identity(1, 1);
    dep.sigma_z.resize(2, 2);
    dep.sigma_z << 1.0, -0.4, -0.4, 1.0;
    dep.m = 2;
    dep.n = 4000;
    const Replicate rep = generate(dep, 1);
    const MatrixXd& z = rep.data.cluster(0).Z;
    const double corr = z.col(0).dot(z.col(1)) /
                        std::sqrt(z.col(0).squaredNorm() * z.col(1).squaredNorm());
    CHECK(corr == doctest::Approx(-0.4).epsilon(0.1));

    dep.sigma_z << 1.0, 1.5, 1.5, 1.0;  // indefinite
    CHECK_THROWS_AS(generate(dep, 0), ScenarioError);
  }
  SUBCASE("toeplitz law shows the requested column correlation") {
    Scenario dep = small_study();
    dep.law = CovariateLaw::toeplitz;
    dep.rho_z = 0.6;
    dep.rho_x = 0.0;
    dep.m = 2;
    dep.n = 4000;
    const Replicate rep = generate(dep, 0);
    const MatrixXd& z = rep.data.cluster(0).Z;
    const double corr = z.col(0).dot(z.col(1)) /
                        std::sqrt(z.col(0).squaredNorm() * z.col(1).squaredNorm());
    CHECK(corr == doctest::Approx(0.6).epsilon(0.08));
  }
}

TEST_CASE("scenario parsing") {
  SUBCASE("round trip of a full file") {
    std::istringstream in(
        "# comment line\n"
        "m = 10\n"
        "n = 50\n"
        "p = 5\n"
        "q = 5\n"
        "beta0 = 1.2,-0.7,0.8,0,0\n"
        "sigma0_sq = 0,0.5,1,1.5,0\n"
        "v0_sq = 1\n"
        "covariate_law = toeplitz\n"
        "rho_x = 0.4\n"
        "rho_z = 0.6\n"
        "alpha = 1,2,3\n"
        "gamma = 2,3,4\n"
        "reps = 1000\n"
        "seed = 31\n"
        "level = 0.95\n"
        "methods = both\n");
    const Scenario sc = parse_scenario(in);
    CHECK(sc.m == 10);
    CHECK(sc.size_rule == SizeRule::balanced);
    CHECK(sc.n == 50);
    CHECK(sc.truth.beta0[0] == doctest::Approx(1.2));
    CHECK(sc.law == CovariateLaw::toeplitz);
    CHECK(sc.fit_spec.gamma == std::vector<int>{2, 3, 4});
    CHECK(sc.replications == 1000);
  }
  SUBCASE("unknown key is named") {
    std::istringstream in("m = 3\nn = 4\nfoo = 1\n");
    try {
      parse_scenario(in);
      FAIL("expected ScenarioError");
    } catch (const ScenarioError& e) {
      CHECK(e.key == "foo");
    }
  }
  SUBCASE("n and N together are rejected") {
    std::istringstream in("m = 5\nn = 4\nN = 100\n");
    CHECK_THROWS_AS(parse_scenario(in), ScenarioError);
  }
  SUBCASE("bounds checks fire") {
    std::istringstream in("m = 5\nn = 4\nq = 2\nsigma0_sq = 1,1\ngamma = 3\n");
    CHECK_THROWS_AS(parse_scenario(in), ScenarioError);
  }
}

TEST_CASE("run_study aggregates and is thread-count invariant") {
  const Scenario sc = small_study();
  const StudySummary s1 = run_study(sc, 1);
  CHECK(s1.completed + s1.failed == sc.replications);
  CHECK(s1.completed > 0);
  REQUIRE(s1.estimands.size() == 3);  // sigma2_1, sigma2_2, v2
  CHECK(s1.estimands[0] == "sigma2_1");
  CHECK(s1.estimands.back() == "v2");
  CHECK(s1.mean.size() == 3);
  for (int c = 0; c < s1.fixedm_coverage.size(); ++c) {
    CHECK(s1.fixedm_coverage[c] >= 0.0);
    CHECK(s1.fixedm_coverage[c] <= 1.0);
  }
  // SE formula
  for (int c = 0; c < s1.fixedm_coverage.size(); ++c) {
    const double p = s1.fixedm_coverage[c];
    CHECK(s1.fixedm_se[c] ==
          doctest::Approx(std::sqrt(p * (1.0 - p) / s1.completed)).epsilon(1e-12));
  }

  const StudySummary s4 = run_study(sc, 4);
  std::ostringstream raw1, raw4, sum1, sum4;
  write_raw_csv(s1, raw1);
  write_raw_csv(s4, raw4);
  write_summary_csv(s1, sum1);
  write_summary_csv(s4, sum4);
  CHECK(raw1.str() == raw4.str());
  CHECK(sum1.str() == sum4.str());
  CHECK(raw1.str().find("classical_lower_1") != std::string::npos);
}

TEST_CASE("study mean tracks the realized random effects, not the truth") {
  // fixed m: sigma2_hat follows (1/m) sum b^2 replicate by replicate
  Scenario sc = small_study();
  sc.m = 5;
  sc.n = 120;
  sc.replications = 40;
  sc.fit_spec = ModelSpec{{1}, {1}};
  sc.truth.sigma0_sq = VectorXd(2);
  sc.truth.sigma0_sq << 1.0, 0.0;
  const StudySummary s = run_study(sc, 2);
  double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  int cnt = 0;
  for (const ReplicateRecord& rec : s.raw) {
    if (!rec.ok) continue;
    const double x = rec.bsq_mean[0];
    const double y = rec.fit.sigma2_hat[0];
    sx += x;
    sy += y;
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
    ++cnt;
  }
  REQUIRE(cnt > 20);
  const double corr = (sxy / cnt - sx / cnt * (sy / cnt)) /
                      std::sqrt((sxx / cnt - sx / cnt * (sx / cnt)) *
                                (syy / cnt - sy / cnt * (sy / cnt)));
  CHECK(corr >= 0.9);
}

TEST_CASE("correlated-covariate misspecification inflates sigma2_1") {
  // m = 1 design, two correlated covariate pairs; fit only the first pair
  Scenario sc;
  sc.m = 1;
  sc.size_rule = SizeRule::balanced;
  sc.n = 2000;
  sc.p = 2;
  sc.q = 2;
  sc.truth.beta0 = VectorXd(2);
  sc.truth.beta0 << 1.0, 1.0;
  sc.truth.sigma0_sq = VectorXd(2);
  sc.truth.sigma0_sq << 1.0, 1.0;
  sc.truth.v0_sq = 1.0;
  sc.law = CovariateLaw::correlated_pair;
  sc.rho_x = 0.3;
  sc.rho_z = 0.5;
  sc.fit_spec = ModelSpec{{1}, {1}};
  sc.replications = 150;
  sc.seed = 4242;
  sc.methods = CiMethods::none;

  const StudySummary s = run_study(sc, 4);
  // E (b_1 + (c12/c11) b_2)^2 = sigma_1^2 + (c12/c11)^2 sigma_2^2
  const double expect = 1.0 + 0.5 * 0.5 * 1.0;
  CHECK(s.mean[0] == doctest::Approx(expect).epsilon(0.15));
}
