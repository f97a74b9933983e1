#pragma once

#include "clmm/fit.hpp"

namespace clmm {

struct PredictionResult {
  std::vector<VectorXd> b_blup;  // per cluster, length q(gamma)
  std::vector<VectorXd> b_ls;
  std::vector<VectorXd> fitted;  // Z_i(gamma) b_blup_i, length n_i
};

// Empirical BLUP b_i = diag(theta) Z_i(gamma)' H_i^{-1} (y_i - X_i(alpha) beta),
// evaluated at the fit's estimates; also fills the LS predictor.
PredictionResult blup(const Dataset& data, const ModelSpec& spec, const MLFit& fit);

// Per-cluster least squares predictor (Z_i'Z_i)^{-1} Z_i'(y_i - X_i beta_ols);
// the global beta is re-estimated by OLS.
std::vector<VectorXd> ls_predict(const Dataset& data, const ModelSpec& spec);

// Difference in squared prediction error between the LS predictor and the
// BLUP at the supplied (sigma1_sq, v2); requires p(alpha) = 0, q(gamma) = 1
// and the generating b values (simulation use only).
double prediction_gap(const Dataset& data, const ModelSpec& spec,
                      const std::vector<double>& b_true, double sigma1_sq, double v2);

// Closed-form limit of n * gap at the ML estimates; defined only for m > 4.
double expected_gap(int m, double v0_sq, double sigma1_sq);

}  // namespace clmm
