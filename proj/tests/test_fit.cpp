#include <algorithm>
#include <cmath>

#include "clmm/fit.hpp"
#include "clmm/simulate.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace clmm;

namespace {

// 1-d grid argmin of the profile objective
std::pair<double, double> grid_argmin(const ProfileLikelihood& like, double lo, double hi,
                                      double step) {
  double best_t = lo, best_f = std::numeric_limits<double>::infinity();
  for (double t = lo; t <= hi + 1e-12; t += step) {
    const double f = like.profile_objective(VectorXd::Constant(1, t)).neg2loglik;
    if (f < best_f) {
      best_f = f;
      best_t = t;
    }
  }
  return {best_t, best_f};
}

Scenario experiment1(int m, int n) {
  Scenario sc;
  sc.m = m;
  sc.size_rule = SizeRule::balanced;
  sc.n = n;
  sc.p = 5;
  sc.q = 5;
  sc.truth.beta0 = VectorXd(5);
  sc.truth.beta0 << 1.2, -0.7, 0.8, 0.0, 0.0;
  sc.truth.sigma0_sq = VectorXd(5);
  sc.truth.sigma0_sq << 0.0, 0.5, 1.0, 1.5, 0.0;
  sc.truth.v0_sq = 1.0;
  sc.fit_spec = ModelSpec{{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}};
  sc.seed = 1234;
  return sc;
}

}  // namespace

TEST_CASE("fit with empty gamma reduces to OLS") {
  NormalStream rng(41, 0);
  const Dataset data = test::make_dataset(rng, {.m = 3, .p = 2, .q = 1});
  const MLFit result = fit(data, ModelSpec{{1, 2}, {}});
  CHECK(result.converged);
  CHECK(result.theta_hat.size() == 0);

  MatrixXd x(data.total_rows(), 2);
  VectorXd y(data.total_rows());
  Eigen::Index at = 0;
  for (const Cluster& c : data.clusters()) {
    x.middleRows(at, c.rows()) = c.X;
    y.segment(at, c.rows()) = c.y;
    at += c.rows();
  }
  const VectorXd beta = x.colPivHouseholderQr().solve(y);
  CHECK((result.beta_hat - beta).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(result.v2_hat ==
        doctest::Approx((y - x * beta).squaredNorm() / static_cast<double>(y.size()))
            .epsilon(1e-12));
}

TEST_CASE("fit matches a fine 1-d grid search") {
  NormalStream rng(43, 0);
  for (int trial = 0; trial < 8; ++trial) {
    test::RandomInstance ri{.m = 3, .n_min = 5, .n_max = 12, .p = 1, .q = 1};
    ri.theta_scale = 0.5 + 2.0 * rng.uniform();
    const Dataset data = test::make_dataset(rng, ri);
    const ModelSpec spec{{1}, {1}};
    const MLFit result = fit(data, spec);
    CHECK(result.converged);

    const ProfileLikelihood like(data, spec);
    const auto [t_star, f_star] = grid_argmin(like, 0.0, 50.0, 1e-3);
    CHECK(std::abs(result.theta_hat[0] - t_star) <= 2e-3);
    CHECK(result.neg2loglik_min <= f_star + 1e-6);
  }
}

TEST_CASE("fit beats a coarse 2-d grid") {
  NormalStream rng(44, 0);
  for (int trial = 0; trial < 4; ++trial) {
    test::RandomInstance ri{.m = 3, .n_min = 4, .n_max = 9, .p = 1, .q = 2};
    const Dataset data = test::make_dataset(rng, ri);
    const ModelSpec spec{{1}, {1, 2}};
    const MLFit result = fit(data, spec);
    const ProfileLikelihood like(data, spec);
    double grid_best = std::numeric_limits<double>::infinity();
    for (double a = 0.0; a <= 20.0; a += 0.25)
      for (double b = 0.0; b <= 20.0; b += 0.25) {
        VectorXd theta(2);
        theta << a, b;
        grid_best = std::min(grid_best, like.profile_objective(theta).neg2loglik);
      }
    CHECK(result.neg2loglik_min <= grid_best + 1e-6);
  }
}

TEST_CASE("KKT conditions hold at the reported solution") {
  NormalStream rng(45, 0);
  const Dataset data = test::make_dataset(rng, {.m = 4, .n_min = 6, .n_max = 10,
                                                .p = 1, .q = 2});
  const ModelSpec spec{{1}, {1, 2}};
  FitOptions options;
  const MLFit result = fit(data, spec, options);
  REQUIRE(result.converged);
  const double tol = options.grad_tol * static_cast<double>(data.total_rows());
  const ProfileLikelihood like(data, spec);
  const VectorXd grad = like.grad_theta(result.theta_hat, result.v2_hat);
  for (int s = 0; s < 2; ++s) {
    if (result.theta_hat[s] > 0.0)
      CHECK(std::abs(grad[s]) <= tol * (1.0 + std::abs(grad[s]) * 0.0));
    else
      CHECK(grad[s] >= -tol);
  }
  CHECK(result.kkt_residual <= tol);
  // sigma2 = theta * v2 exactly
  for (int s = 0; s < 2; ++s)
    CHECK(result.sigma2_hat[s] == result.theta_hat[s] * result.v2_hat);
}

TEST_CASE("monotone descent over accepted iterations") {
  NormalStream rng(46, 0);
  const Dataset data = test::make_dataset(rng, {.m = 4, .p = 2, .q = 2});
  std::vector<double> trace;
  FitOptions options;
  options.trace = &trace;
  options.starts = {VectorXd::Zero(2)};  // single start keeps one descent path
  (void)fit(data, test::full_spec(data), options);
  REQUIRE(trace.size() >= 2);
  for (size_t i = 0; i + 1 < trace.size(); ++i) CHECK(trace[i + 1] <= trace[i] + 1e-12);
}

TEST_CASE("scale equivariance of the fit") {
  NormalStream rng(47, 0);
  const Dataset data = test::make_dataset(rng, {.m = 3, .n_min = 6, .n_max = 9,
                                                .p = 1, .q = 2});
  const ModelSpec spec{{1}, {1, 2}};
  const MLFit base = fit(data, spec);

  const double c = 3.7;
  std::vector<Cluster> scaled = data.clusters();
  for (Cluster& cl : scaled) cl.y *= c;
  const Dataset scaled_data(std::move(scaled));
  const MLFit other = fit(scaled_data, spec);

  REQUIRE(base.converged);
  REQUIRE(other.converged);
  CHECK((other.theta_hat - base.theta_hat).lpNorm<Eigen::Infinity>() <
        1e-8 * std::max(1.0, base.theta_hat.lpNorm<Eigen::Infinity>()));
  CHECK(other.v2_hat == doctest::Approx(c * c * base.v2_hat).epsilon(1e-8));
  for (int s = 0; s < 2; ++s)
    CHECK(other.sigma2_hat[s] == doctest::Approx(c * c * base.sigma2_hat[s]).epsilon(1e-7));
  const double n = static_cast<double>(data.total_rows());
  CHECK(other.neg2loglik_min - base.neg2loglik_min ==
        doctest::Approx(2.0 * n * std::log(c)).epsilon(1e-10));
}

TEST_CASE("theta cap is reported") {
  NormalStream rng(48, 0);
  test::RandomInstance ri{.m = 4, .n_min = 8, .n_max = 12, .p = 0, .q = 1};
  ri.theta_scale = 50.0;  // true ratio far above the cap below
  const Dataset data = test::make_dataset(rng, ri);
  FitOptions options;
  options.theta_cap = 10.0;
  const MLFit result = fit(data, ModelSpec{{}, {1}}, options);
  CHECK(result.hit_cap);
  CHECK(result.theta_hat[0] == doctest::Approx(10.0));
}

TEST_CASE("degenerate data raises, non-convergence does not") {
  SUBCASE("exact fit") {
    Cluster c;
    c.id = 1;
    c.y = VectorXd::Constant(4, 5.0);
    c.X = MatrixXd::Ones(4, 1);
    c.Z = MatrixXd::Identity(4, 4).leftCols(1);
    const Dataset data({c});
    CHECK_THROWS_AS(fit(data, ModelSpec{{1}, {1}}), DegenerateFitError);
  }
  SUBCASE("iteration starved fit reports converged = false") {
    NormalStream rng(49, 0);
    const Dataset data = test::make_dataset(rng, {.m = 4, .p = 1, .q = 2});
    FitOptions options;
    options.max_iter = 1;
    options.grad_tol = 1e-14;
    const MLFit result = fit(data, ModelSpec{{1}, {1, 2}}, options);
    CHECK_FALSE(result.converged);
  }
}

TEST_CASE("method of moments start") {
  SUBCASE("zero residuals give a zero start") {
    Cluster c;
    c.id = 1;
    c.y = VectorXd::Ones(5) * 2.0;
    c.X = MatrixXd::Ones(5, 1);
    c.Z = MatrixXd::Random(5, 1);
    const Dataset data({c});
    const VectorXd start = method_of_moments_start(data, ModelSpec{{1}, {1}});
    CHECK(start[0] == 0.0);
  }
  SUBCASE("pure noise starts near zero") {
    Scenario sc = experiment1(4, 100);
    sc.truth.sigma0_sq.setZero();
    sc.seed = 55;
    std::vector<double> starts;
    for (int r = 0; r < 31; ++r) {
      const Replicate rep = generate(sc, r);
      const VectorXd s = method_of_moments_start(rep.data, sc.fit_spec);
      starts.push_back(s.lpNorm<Eigen::Infinity>());
    }
    std::nth_element(starts.begin(), starts.begin() + 15, starts.end());
    CHECK(starts[15] <= 0.1);
  }
  SUBCASE("within a factor 3 of the true ratios most of the time") {
    const Scenario sc = experiment1(30, 30);
    int hits2 = 0, hits3 = 0, hits4 = 0;
    const int reps = 50;
    for (int r = 0; r < reps; ++r) {
      const Replicate rep = generate(sc, r);
      const VectorXd s = method_of_moments_start(rep.data, sc.fit_spec);
      const VectorXd truth = sc.truth.theta0();
      auto within3 = [&](int k) {
        return s[k] >= truth[k] / 3.0 && s[k] <= truth[k] * 3.0;
      };
      hits2 += within3(1);
      hits3 += within3(2);
      hits4 += within3(3);
    }
    CHECK(hits2 >= static_cast<int>(0.8 * reps));
    CHECK(hits3 >= static_cast<int>(0.8 * reps));
    CHECK(hits4 >= static_cast<int>(0.8 * reps));
  }
}

TEST_CASE("overfit variance shrinks as clusters grow") {
  // sigma_1 = 0 in truth; gamma includes it anyway
  Scenario sc = experiment1(10, 50);
  sc.fit_spec = ModelSpec{{1, 2, 3}, {1, 2}};
  sc.seed = 99;
  auto median_sigma1 = [&](int n) {
    Scenario local = sc;
    local.n = n;
    std::vector<double> values;
    for (int r = 0; r < 40; ++r) {
      const Replicate rep = generate(local, r);
      const MLFit f = fit(rep.data, local.fit_spec);
      values.push_back(f.sigma2_hat[0]);
    }
    std::nth_element(values.begin(), values.begin() + 20, values.end());
    return values[20];
  };
  const double at50 = median_sigma1(50);
  const double at200 = median_sigma1(200);
  CHECK(at200 <= at50 / 2.0);
}
