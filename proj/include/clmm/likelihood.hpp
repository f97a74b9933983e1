#pragma once

#include "clmm/kernel.hpp"

namespace clmm {

struct LikelihoodEval {
  double neg2loglik = 0.0;
  double v2 = 0.0;             // profiled v^2 = residual_quad / N
  VectorXd beta;               // GLS beta, length p(alpha)
  double residual_quad = 0.0;  // y' H^{-1} (I - M) y
  bool degenerate = false;     // residual numerically zero; neg2loglik = +inf
};

// Profile likelihood of a candidate model: beta is profiled by GLS inside
// every evaluation and v^2 has the closed-form optimum residual_quad / N, so
// the optimizer only ever sees theta.
class ProfileLikelihood {
 public:
  ProfileLikelihood(const Dataset& data, const ModelSpec& spec);
  ProfileLikelihood(Dataset&&, const ModelSpec&) = delete;  // keeps a reference

  const DesignView& design() const { return design_; }
  long long n_total() const { return design_.data().total_rows(); }

  // (X' H^{-1} X)^{-1} X' H^{-1} y from per-cluster quadratic forms.
  VectorXd gls_beta(const Kernel& kernel) const;

  // (v2, residual_quad) at the GLS beta for this kernel.
  std::pair<double, double> profiled_v2(const Kernel& kernel) const;

  // -2 log L at (theta, v2) with beta profiled out.
  double neg2loglik(const VectorXd& theta, double v2) const;

  // The objective the optimizer minimizes; +inf sentinel when degenerate.
  LikelihoodEval profile_objective(const VectorXd& theta) const;
  LikelihoodEval profile_objective(const Kernel& kernel) const;

  // d/dv2 of -2 log L: N/v2 - residual_quad/v2^2.
  double grad_v2(const VectorXd& theta, double v2) const;

  // d/dtheta_k of -2 log L: sum_i { z'H^{-1}z - [z' H^{-1} (y - X beta)]^2 / v2 }.
  VectorXd grad_theta(const VectorXd& theta, double v2) const;
  VectorXd grad_theta(const Kernel& kernel, const VectorXd& beta, double v2) const;

  // Residual quad is treated as zero below this (N * 1e-14 * var(y)).
  double degenerate_threshold() const { return degenerate_threshold_; }

 private:
  DesignView design_;
  double degenerate_threshold_;
};

}  // namespace clmm
