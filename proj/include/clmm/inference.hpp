#pragma once

#include <string>

#include "clmm/fit.hpp"

namespace clmm {

// Phi^{-1}(a) for a in (0,1); absolute accuracy better than 1e-10.
double normal_quantile(double a);

// Standard normal CDF.
double normal_cdf(double x);

// Regularized lower incomplete gamma P(s, x) (series / continued fraction).
double gamma_p(double s, double x);

// Chi-square CDF and quantile on df degrees of freedom; the quantile uses a
// Wilson-Hilferty start refined by safeguarded Newton, relative accuracy 1e-9.
double chisq_cdf(int df, double x);
double chisq_quantile(int df, double a);

enum class IntervalMethod { classical_normal, fixedm_chisquare };

std::string method_name(IntervalMethod method);

struct ConfidenceInterval {
  int k = 0;  // 1-based effect index (member of gamma)
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.0;
  IntervalMethod method = IntervalMethod::classical_normal;
};

// Large-m normal interval sigma^2 -/+ sqrt(2 sigma^4 / m) * zeta_{1-a/2};
// the lower endpoint is clamped at 0.
ConfidenceInterval classical_interval(const MLFit& fit, int m, int k, double level);
ConfidenceInterval classical_interval(double sigma2_hat, int m, int k, double level);

// Fixed-cluster-count interval (m sigma^2 / chi2_{m,1-a/2}, m sigma^2 / chi2_{m,a/2});
// its width does not shrink as the cluster sizes grow.
ConfidenceInterval fixed_m_interval(const MLFit& fit, int m, int k, double level);
ConfidenceInterval fixed_m_interval(double sigma2_hat, int m, int k, double level);

}  // namespace clmm
