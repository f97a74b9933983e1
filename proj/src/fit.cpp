#include "clmm/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace clmm {

int MLFit::gamma_position(int k) const {
  auto it = std::find(gamma.begin(), gamma.end(), k);
  if (it == gamma.end())
    throw InvalidSpecError("effect " + std::to_string(k) + " is not in gamma");
  return static_cast<int>(it - gamma.begin());
}

VectorXd method_of_moments_start(const Dataset& data, const ModelSpec& spec) {
  const DesignView design(data, spec);
  const int q = design.q();
  VectorXd start = VectorXd::Zero(q);
  if (q == 0) return start;

  // Global OLS residuals (theta = 0 GLS).
  const ProfileLikelihood like(data, spec);
  const Kernel identity(design, VectorXd::Zero(q));
  VectorXd beta;
  try {
    beta = like.gls_beta(identity);
  } catch (const RankError&) {
    return start;
  }
  double rss = 0.0;
  std::vector<VectorXd> residuals(static_cast<size_t>(data.m()));
  for (int i = 0; i < data.m(); ++i) {
    VectorXd r = data.cluster(i).y;
    if (design.p() > 0) r.noalias() -= design.x_matrix(i) * beta;
    rss += r.squaredNorm();
    residuals[static_cast<size_t>(i)] = std::move(r);
  }
  const double v2_ols = rss / static_cast<double>(data.total_rows());
  if (!(v2_ols > 0.0) || !std::isfinite(v2_ols)) return start;  // zero residuals

  // Unit-variance scale for the ratio: residual variance after projecting out
  // X(alpha) and Z(gamma) within each cluster. The alpha-only OLS variance
  // absorbs the random-effect variation and would shrink every start.
  double within_rss = 0.0;
  long long within_df = 0;
  for (int i = 0; i < data.m(); ++i) {
    const Cluster& c = data.cluster(i);
    MatrixXd w(c.rows(), design.p() + q);
    if (design.p() > 0) w.leftCols(design.p()) = design.x_matrix(i);
    if (q > 0) w.rightCols(q) = design.z_matrix(i);
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(w);
    within_rss += (c.y - w * qr.solve(c.y)).squaredNorm();
    within_df += c.rows() - qr.rank();
  }
  double v2_scale = within_df > 0 ? within_rss / static_cast<double>(within_df) : v2_ols;
  if (!(v2_scale > 0.0) || !std::isfinite(v2_scale)) v2_scale = v2_ols;

  const double m = static_cast<double>(data.m());
  for (int s = 0; s < q; ++s) {
    double proj_sq = 0.0, inv_norm = 0.0;
    bool ok = true;
    for (int i = 0; i < data.m(); ++i) {
      const double nz = design.z_col(i, s).squaredNorm();
      if (!(nz > 0.0)) {
        ok = false;
        break;
      }
      const double zr = design.z_col(i, s).dot(residuals[static_cast<size_t>(i)]);
      proj_sq += zr * zr / (nz * nz);
      inv_norm += 1.0 / nz;
    }
    if (!ok) continue;
    const double value = (proj_sq / m - v2_ols * inv_norm / m) / v2_scale;
    start[s] = std::isfinite(value) ? std::max(0.0, value) : 0.0;
  }
  return start;
}

namespace {

struct Point {
  VectorXd theta;
  LikelihoodEval eval;
  VectorXd grad;
};

double kkt_residual(const VectorXd& theta, const VectorXd& grad, double cap) {
  double worst = 0.0;
  for (int s = 0; s < theta.size(); ++s) {
    double r;
    if (theta[s] <= 0.0)
      r = std::max(0.0, -grad[s]);
    else if (theta[s] >= cap)
      r = std::max(0.0, grad[s]);
    else
      r = std::abs(grad[s]);
    worst = std::max(worst, r);
  }
  return worst;
}

VectorXd clamp(const VectorXd& theta, double cap) {
  return theta.cwiseMax(0.0).cwiseMin(cap);
}

struct LocalResult {
  Point point;
  int iterations = 0;
  bool converged = false;
  double kkt = 0.0;
};

LocalResult minimize_from(const ProfileLikelihood& like, const VectorXd& start,
                          const FitOptions& opt, double tol) {
  const int q = static_cast<int>(start.size());
  LocalResult res;

  Point cur;
  cur.theta = clamp(start, opt.theta_cap);
  Kernel cur_kernel(like.design(), cur.theta);
  cur.eval = like.profile_objective(cur_kernel);
  if (cur.eval.degenerate)
    throw DegenerateFitError("residual variation is numerically zero; no v^2 > 0 exists");
  cur.grad = like.grad_theta(cur_kernel, cur.eval.beta, cur.eval.v2);
  if (opt.trace) opt.trace->push_back(cur.eval.neg2loglik);

  // Scale the first step to unit length; BFGS corrects from there.
  MatrixXd binv = MatrixXd::Identity(q, q) /
                  std::max(1.0, cur.grad.lpNorm<Eigen::Infinity>());
  bool binv_seeded = false;
  const double c1 = 1e-4;

  const int descent_budget = std::max(1, opt.max_iter - 25);  // rest goes to the polish
  for (res.iterations = 0; res.iterations < descent_budget; ++res.iterations) {
    res.kkt = kkt_residual(cur.theta, cur.grad, opt.theta_cap);
    if (res.kkt <= tol) {
      res.converged = true;
      break;
    }

    // Bound-active coordinates do not move this iteration.
    VectorXd mask = VectorXd::Ones(q);
    for (int s = 0; s < q; ++s)
      if ((cur.theta[s] <= 0.0 && cur.grad[s] > 0.0) ||
          (cur.theta[s] >= opt.theta_cap && cur.grad[s] < 0.0))
        mask[s] = 0.0;

    VectorXd g_free = cur.grad.cwiseProduct(mask);
    VectorXd dir = -(binv * g_free).cwiseProduct(mask);
    if (dir.dot(cur.grad) >= -1e-14 * dir.norm() * cur.grad.norm()) {
      binv = MatrixXd::Identity(q, q) / std::max(1.0, g_free.lpNorm<Eigen::Infinity>());
      binv_seeded = false;
      dir = -(binv * g_free).cwiseProduct(mask);
    }

    Point next;
    std::optional<Kernel> next_kernel;
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1) {
        // quasi-Newton direction made no progress: fall back to steepest descent
        binv = MatrixXd::Identity(q, q) / std::max(1.0, g_free.lpNorm<Eigen::Infinity>());
        binv_seeded = false;
        dir = -(binv * g_free).cwiseProduct(mask);
      }
      double alpha = 1.0;
      for (int back = 0; back < 60; ++back) {
        const VectorXd cand = clamp(cur.theta + alpha * dir, opt.theta_cap);
        const VectorXd step = cand - cur.theta;
        if (step.lpNorm<Eigen::Infinity>() <
            opt.step_tol * std::max(1.0, cur.theta.lpNorm<Eigen::Infinity>()))
          break;
        next.theta = cand;
        next_kernel.emplace(like.design(), cand);
        next.eval = like.profile_objective(*next_kernel);
        if (!next.eval.degenerate &&
            next.eval.neg2loglik <= cur.eval.neg2loglik + c1 * cur.grad.dot(step)) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
    }
    if (!accepted) {
      res.converged = res.kkt <= tol;
      break;
    }

    next.grad = like.grad_theta(*next_kernel, next.eval.beta, next.eval.v2);
    const VectorXd s = next.theta - cur.theta;
    const VectorXd yv = next.grad - cur.grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!binv_seeded) {
        binv = MatrixXd::Identity(q, q) * (sy / yv.squaredNorm());
        binv_seeded = true;
      }
      // BFGS update of the inverse Hessian approximation
      const VectorXd by = binv * yv;
      const double yby = yv.dot(by);
      binv += ((sy + yby) / (sy * sy)) * (s * s.transpose());
      const MatrixXd cross = (s * by.transpose()) / sy;
      binv -= cross + cross.transpose();
    }
    cur = std::move(next);
    if (opt.trace) opt.trace->push_back(cur.eval.neg2loglik);
  }
  res.kkt = kkt_residual(cur.theta, cur.grad, opt.theta_cap);

  // Line searches bottom out at the objective's floating-point noise floor
  // (|f| ~ N log v2) while the analytic gradient stays sharp, so finish with
  // damped Newton on the gradient over the free coordinates.
  for (int polish = 0;
       polish < 25 && res.kkt > tol && res.iterations < opt.max_iter; ++polish) {
    std::vector<int> free_set;
    for (int s = 0; s < q; ++s) {
      const bool at_lower = cur.theta[s] <= 0.0 && cur.grad[s] > 0.0;
      const bool at_upper = cur.theta[s] >= opt.theta_cap && cur.grad[s] < 0.0;
      if (!at_lower && !at_upper) free_set.push_back(s);
    }
    if (free_set.empty()) break;
    const int nf = static_cast<int>(free_set.size());

    MatrixXd jac(nf, nf);
    for (int c = 0; c < nf; ++c) {
      const int s = free_set[static_cast<size_t>(c)];
      const double h = std::max(1e-7, 1e-6 * cur.theta[s]);
      VectorXd plus = cur.theta, minus = cur.theta;
      plus[s] += h;
      minus[s] = std::max(0.0, minus[s] - h);
      const double span = plus[s] - minus[s];
      const VectorXd gp = like.grad_theta(plus, like.profile_objective(plus).v2);
      const VectorXd gm = like.grad_theta(minus, like.profile_objective(minus).v2);
      for (int r = 0; r < nf; ++r)
        jac(r, c) = (gp[free_set[static_cast<size_t>(r)]] -
                     gm[free_set[static_cast<size_t>(r)]]) /
                    span;
    }
    jac = 0.5 * (jac + jac.transpose());
    jac.diagonal().array() += 1e-10 * std::max(1.0, jac.diagonal().cwiseAbs().maxCoeff());

    VectorXd g_free(nf);
    for (int c = 0; c < nf; ++c) g_free[c] = cur.grad[free_set[static_cast<size_t>(c)]];
    const VectorXd step = jac.ldlt().solve(g_free);
    if (!step.allFinite()) break;

    bool improved = false;
    double damp = 1.0;
    for (int attempt = 0; attempt < 8 && !improved; ++attempt, damp *= 0.5) {
      VectorXd cand = cur.theta;
      for (int c = 0; c < nf; ++c) cand[free_set[static_cast<size_t>(c)]] -= damp * step[c];
      cand = clamp(cand, opt.theta_cap);
      const Kernel kernel(like.design(), cand);
      const LikelihoodEval eval = like.profile_objective(kernel);
      if (eval.degenerate) continue;
      const VectorXd grad = like.grad_theta(kernel, eval.beta, eval.v2);
      const double kkt = kkt_residual(cand, grad, opt.theta_cap);
      if (kkt < res.kkt &&
          eval.neg2loglik <= cur.eval.neg2loglik + 1e-9 * std::max(1.0, std::abs(cur.eval.neg2loglik))) {
        cur.theta = cand;
        cur.eval = eval;
        cur.grad = grad;
        res.kkt = kkt;
        improved = true;
      }
    }
    ++res.iterations;
    if (!improved) break;
  }

  if (res.kkt <= tol) res.converged = true;
  res.point = std::move(cur);
  return res;
}

}  // namespace

MLFit fit(const Dataset& data, const ModelSpec& spec, const FitOptions& options) {
  if (!(options.grad_tol > 0.0) || !(options.step_tol > 0.0))
    throw DomainError("tolerances must be > 0");
  spec.check(data);
  const ProfileLikelihood like(data, spec);
  const int q = spec.q_gamma();

  MLFit out;
  out.alpha = spec.alpha;
  out.gamma = spec.gamma;

  if (q == 0) {
    const LikelihoodEval eval = like.profile_objective(VectorXd());
    if (eval.degenerate)
      throw DegenerateFitError("residual variation is numerically zero; no v^2 > 0 exists");
    out.theta_hat = VectorXd();
    out.sigma2_hat = VectorXd();
    out.v2_hat = eval.v2;
    out.beta_hat = eval.beta;
    out.neg2loglik_min = eval.neg2loglik;
    out.converged = true;
    return out;
  }

  std::vector<VectorXd> starts = options.starts;
  if (starts.empty()) {
    starts.push_back(VectorXd::Zero(q));
    VectorXd mom = method_of_moments_start(data, spec);
    if ((mom - starts.front()).lpNorm<Eigen::Infinity>() > 1e-12) starts.push_back(mom);
  }
  for (const VectorXd& s : starts)
    if (s.size() != q) throw DimensionError("start vector length does not match q(gamma)");

  const double tol = options.grad_tol * static_cast<double>(like.n_total());
  bool have_best = false;
  LocalResult best;
  int total_iter = 0;
  for (const VectorXd& start : starts) {
    LocalResult res = minimize_from(like, start, options, tol);
    total_iter += res.iterations;
    if (!have_best) {
      best = std::move(res);
      have_best = true;
      continue;
    }
    const double gap = res.point.eval.neg2loglik - best.point.eval.neg2loglik;
    const bool better =
        gap < -1e-10 ||
        (std::abs(gap) <= 1e-10 &&
         res.point.theta.lpNorm<1>() < best.point.theta.lpNorm<1>());
    if (better) best = std::move(res);
  }

  out.theta_hat = best.point.theta;
  out.v2_hat = best.point.eval.v2;
  out.sigma2_hat = best.point.theta * best.point.eval.v2;
  out.beta_hat = best.point.eval.beta;
  out.neg2loglik_min = best.point.eval.neg2loglik;
  out.iterations = total_iter;
  out.converged = best.converged;
  out.kkt_residual = best.kkt;
  for (int s = 0; s < q; ++s) {
    if (out.theta_hat[s] <= 0.0) out.active_set.push_back(spec.gamma[static_cast<size_t>(s)]);
    if (out.theta_hat[s] >= options.theta_cap) out.hit_cap = true;
  }
  return out;
}

}  // namespace clmm
