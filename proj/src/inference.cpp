#include "clmm/inference.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace clmm {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

// std::lgamma writes the global signgam, which races across study threads
#if defined(__GLIBC__)
extern "C" double lgamma_r(double, int*);
double log_gamma(double x) {
  int sign = 0;
  return lgamma_r(x, &sign);
}
#else
double log_gamma(double x) { return std::lgamma(x); }
#endif

// Rational approximation for Phi^{-1} (Acklam), refined below to full
// double precision with one Halley step.
double normal_quantile_approx(double a) {
  static const double p_low[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double q_low[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static const double p_tail[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
  static const double q_tail[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
  const double a_low = 0.02425;
  if (a < a_low) {
    const double u = std::sqrt(-2.0 * std::log(a));
    return (((((p_tail[0] * u + p_tail[1]) * u + p_tail[2]) * u + p_tail[3]) * u + p_tail[4]) *
                u +
            p_tail[5]) /
           ((((q_tail[0] * u + q_tail[1]) * u + q_tail[2]) * u + q_tail[3]) * u + 1.0);
  }
  if (a > 1.0 - a_low) return -normal_quantile_approx(1.0 - a);
  const double u = a - 0.5;
  const double r = u * u;
  return (((((p_low[0] * r + p_low[1]) * r + p_low[2]) * r + p_low[3]) * r + p_low[4]) * r +
          p_low[5]) *
         u /
         (((((q_low[0] * r + q_low[1]) * r + q_low[2]) * r + q_low[3]) * r + q_low[4]) * r +
          1.0);
}

}  // namespace

double normal_quantile(double a) {
  if (!(a > 0.0 && a < 1.0)) throw DomainError("normal_quantile needs a in (0,1)");
  double x = normal_quantile_approx(a);
  // Halley refinement on Phi(x) - a
  const double e = normal_cdf(x) - a;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

namespace {

// Lower regularized incomplete gamma by power series; x < s + 1.
double gamma_p_series(double s, double x) {
  double term = 1.0 / s;
  double sum = term;
  for (int k = 1; k < 1000; ++k) {
    term *= x / (s + k);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + s * std::log(x) - log_gamma(s));
}

// Upper regularized incomplete gamma by Lentz continued fraction; x >= s + 1.
double gamma_q_contfrac(double s, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k < 1000; ++k) {
    const double an = -static_cast<double>(k) * (static_cast<double>(k) - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + s * std::log(x) - log_gamma(s));
}

}  // namespace

double gamma_p(double s, double x) {
  if (!(s > 0.0)) throw DomainError("gamma_p needs s > 0");
  if (x <= 0.0) return 0.0;
  return x < s + 1.0 ? gamma_p_series(s, x) : 1.0 - gamma_q_contfrac(s, x);
}

double chisq_cdf(int df, double x) {
  if (df < 1) throw DomainError("chisq_cdf needs df >= 1");
  return gamma_p(0.5 * df, 0.5 * x);
}

double chisq_quantile(int df, double a) {
  if (df < 1) throw DomainError("chisq_quantile needs df >= 1");
  if (!(a > 0.0 && a < 1.0)) throw DomainError("chisq_quantile needs a in (0,1)");

  // Wilson-Hilferty start
  const double z = normal_quantile(a);
  const double c = 2.0 / (9.0 * df);
  double t = df * std::pow(1.0 - c + z * std::sqrt(c), 3);
  if (!(t > 0.0) || !std::isfinite(t)) t = static_cast<double>(df);

  const double s = 0.5 * df;
  const double log_norm = s * std::log(2.0) + log_gamma(s);
  auto density = [&](double x) {
    return std::exp((s - 1.0) * std::log(x) - 0.5 * x - log_norm);
  };

  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    const double f = chisq_cdf(df, t) - a;
    if (f > 0.0)
      hi = t;
    else
      lo = t;
    const double pdf = density(t);
    double step = pdf > 0.0 ? f / pdf : 0.0;
    double next = t - step;
    if (!(next > lo && (next < hi))) next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * t;
    if (std::abs(next - t) <= 1e-12 * t) {
      t = next;
      break;
    }
    t = next;
  }
  return t;
}

std::string method_name(IntervalMethod method) {
  return method == IntervalMethod::classical_normal ? "classical" : "fixedm";
}

ConfidenceInterval classical_interval(double sigma2_hat, int m, int k, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("level must be in (0,1)");
  if (m < 1) throw DomainError("m must be >= 1");
  const double zeta = normal_quantile(1.0 - 0.5 * (1.0 - level));
  const double half = std::sqrt(2.0 * sigma2_hat * sigma2_hat / m) * zeta;
  ConfidenceInterval ci;
  ci.k = k;
  ci.lower = std::max(0.0, sigma2_hat - half);
  ci.upper = sigma2_hat + half;
  ci.level = level;
  ci.method = IntervalMethod::classical_normal;
  return ci;
}

ConfidenceInterval fixed_m_interval(double sigma2_hat, int m, int k, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("level must be in (0,1)");
  if (m < 1) throw DomainError("m must be >= 1");
  const double a = 0.5 * (1.0 - level);
  ConfidenceInterval ci;
  ci.k = k;
  ci.lower = m * sigma2_hat / chisq_quantile(m, 1.0 - a);
  ci.upper = m * sigma2_hat / chisq_quantile(m, a);
  ci.level = level;
  ci.method = IntervalMethod::fixedm_chisquare;
  return ci;
}

ConfidenceInterval classical_interval(const MLFit& fit, int m, int k, double level) {
  return classical_interval(fit.sigma2(k), m, k, level);
}

ConfidenceInterval fixed_m_interval(const MLFit& fit, int m, int k, double level) {
  return fixed_m_interval(fit.sigma2(k), m, k, level);
}

}  // namespace clmm
