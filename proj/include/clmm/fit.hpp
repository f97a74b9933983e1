#pragma once

#include "clmm/likelihood.hpp"

namespace clmm {

struct FitOptions {
  double grad_tol = 1e-8;   // KKT tolerance, scaled by N
  double step_tol = 1e-10;
  int max_iter = 500;
  std::vector<VectorXd> starts;  // empty -> {0-vector, method-of-moments start}
  double theta_cap = 1e6;
  std::vector<double>* trace = nullptr;  // accepted objective values, per start
};

struct MLFit {
  std::vector<int> alpha;  // model this fit belongs to
  std::vector<int> gamma;
  VectorXd theta_hat;      // length q(gamma), >= 0
  double v2_hat = 0.0;
  VectorXd sigma2_hat;     // theta_hat * v2_hat, aligned with gamma
  VectorXd beta_hat;       // length p(alpha)
  double neg2loglik_min = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<int> active_set;  // k in gamma with theta_hat_k == 0
  bool hit_cap = false;         // some theta reached the upper cap
  double kkt_residual = 0.0;

  // 0-based position of effect k within gamma; InvalidSpecError if absent.
  int gamma_position(int k) const;
  double sigma2(int k) const { return sigma2_hat[gamma_position(k)]; }
};

// Minimizes the profiled -2 log L over theta in [0, cap]^{q(gamma)} by
// projected BFGS with Armijo backtracking; best local minimum over all
// starts wins (ties within 1e-10 go to the smaller ||theta||_1).
MLFit fit(const Dataset& data, const ModelSpec& spec, const FitOptions& options = {});

// Heuristic nonnegative start from per-cluster OLS residuals.
VectorXd method_of_moments_start(const Dataset& data, const ModelSpec& spec);

}  // namespace clmm
