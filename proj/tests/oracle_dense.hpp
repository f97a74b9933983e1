#pragma once

// Dense reference implementations for the rank-one kernel, GLS, and the
// likelihood. Everything here goes through Eigen's generic inverse / LU /
// least-squares machinery so it shares no code with the paths under test.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "clmm/dataset.hpp"

namespace clmm::test {

inline MatrixXd dense_h(const DesignView& design, int i, const VectorXd& theta) {
  const Eigen::Index n = design.data().cluster(i).rows();
  MatrixXd h = MatrixXd::Identity(n, n);
  for (int s = 0; s < design.q(); ++s) {
    const VectorXd z = design.z_col(i, s);
    h.noalias() += theta[s] * z * z.transpose();
  }
  return h;
}

inline MatrixXd dense_h_inverse(const DesignView& design, int i, const VectorXd& theta) {
  return dense_h(design, i, theta).inverse();
}

inline double dense_log_det(const DesignView& design, const VectorXd& theta) {
  double out = 0.0;
  for (int i = 0; i < design.data().m(); ++i) {
    Eigen::PartialPivLU<MatrixXd> lu(dense_h(design, i, theta));
    const MatrixXd& u = lu.matrixLU();
    for (Eigen::Index r = 0; r < u.rows(); ++r) out += std::log(std::abs(u(r, r)));
  }
  return out;
}

inline VectorXd dense_gls_beta(const DesignView& design, const VectorXd& theta) {
  const int p = design.p();
  MatrixXd gram = MatrixXd::Zero(p, p);
  VectorXd rhs = VectorXd::Zero(p);
  for (int i = 0; i < design.data().m(); ++i) {
    const MatrixXd hinv = dense_h_inverse(design, i, theta);
    const MatrixXd xi = design.x_matrix(i);
    gram.noalias() += xi.transpose() * hinv * xi;
    rhs.noalias() += xi.transpose() * hinv * design.data().cluster(i).y;
  }
  return gram.colPivHouseholderQr().solve(rhs);
}

// y' H^{-1} (I - M) y via the dense inverse and dense GLS.
inline double dense_residual_quad(const DesignView& design, const VectorXd& theta) {
  VectorXd beta;
  if (design.p() > 0) beta = dense_gls_beta(design, theta);
  double quad = 0.0;
  for (int i = 0; i < design.data().m(); ++i) {
    VectorXd r = design.data().cluster(i).y;
    if (design.p() > 0) r -= design.x_matrix(i) * beta;
    quad += r.dot(dense_h_inverse(design, i, theta) * r);
  }
  return quad;
}

inline double dense_neg2loglik(const DesignView& design, const VectorXd& theta, double v2) {
  const double n = static_cast<double>(design.data().total_rows());
  return n * std::log(2.0 * std::numbers::pi) + n * std::log(v2) +
         dense_log_det(design, theta) + dense_residual_quad(design, theta) / v2;
}

inline double dense_profile_objective(const DesignView& design, const VectorXd& theta) {
  const double n = static_cast<double>(design.data().total_rows());
  const double v2 = dense_residual_quad(design, theta) / n;
  return dense_neg2loglik(design, theta, v2);
}

}  // namespace clmm::test
