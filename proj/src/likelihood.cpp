#include "clmm/likelihood.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace clmm {

ProfileLikelihood::ProfileLikelihood(const Dataset& data, const ModelSpec& spec)
    : design_(data, spec) {
  const VectorXd y = data.stacked_y();
  const double n = static_cast<double>(y.size());
  const double mean_sq = y.squaredNorm() / n;
  const double var = std::max(mean_sq - std::pow(y.sum() / n, 2), 0.0);
  // constant y: scale by the mean square instead
  degenerate_threshold_ = n * 1e-14 * (var > 0.0 ? var : mean_sq);
}

VectorXd ProfileLikelihood::gls_beta(const Kernel& kernel) const {
  const int p = design_.p();
  if (p == 0) return VectorXd();

  MatrixXd gram = MatrixXd::Zero(p, p);
  VectorXd rhs = VectorXd::Zero(p);
  for (int i = 0; i < design_.data().m(); ++i) {
    const Cluster& c = design_.data().cluster(i);
    MatrixXd w(c.rows(), p);  // H_i^{-1} X_i(alpha)
    for (int j = 0; j < p; ++j) w.col(j) = kernel.solve(i, design_.x_col(i, j));
    const MatrixXd xi = design_.x_matrix(i);
    gram.noalias() += xi.transpose() * w;
    rhs.noalias() += w.transpose() * c.y;
  }
  gram = 0.5 * (gram + gram.transpose());

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
  const double max_eig = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (eig.eigenvalues().minCoeff() <= 1e-12 * std::max(max_eig, 1.0)) {
    int idx = 0;
    eig.eigenvalues().minCoeff(&idx);
    const VectorXd null_vec = eig.eigenvectors().col(idx);
    const double top = null_vec.cwiseAbs().maxCoeff();
    std::vector<int> cols;
    for (int j = 0; j < p; ++j)
      if (std::abs(null_vec[j]) > 0.3 * top)
        cols.push_back(design_.spec().alpha[static_cast<size_t>(j)]);
    std::string msg = "singular GLS system; dependent X columns:";
    for (int c : cols) msg += ' ' + std::to_string(c);
    throw RankError(msg, cols);
  }
  return eig.eigenvectors() *
         (eig.eigenvalues().cwiseInverse().asDiagonal() * (eig.eigenvectors().transpose() * rhs));
}

std::pair<double, double> ProfileLikelihood::profiled_v2(const Kernel& kernel) const {
  const VectorXd beta = gls_beta(kernel);
  double quad = 0.0;
  for (int i = 0; i < design_.data().m(); ++i) {
    const Cluster& c = design_.data().cluster(i);
    VectorXd r = c.y;
    if (design_.p() > 0) r.noalias() -= design_.x_matrix(i) * beta;
    quad += kernel.quad_form(i, r);
  }
  quad = std::max(quad, 0.0);
  return {quad / static_cast<double>(n_total()), quad};
}

LikelihoodEval ProfileLikelihood::profile_objective(const Kernel& kernel) const {
  LikelihoodEval eval;
  eval.beta = gls_beta(kernel);
  double quad = 0.0;
  for (int i = 0; i < design_.data().m(); ++i) {
    const Cluster& c = design_.data().cluster(i);
    VectorXd r = c.y;
    if (design_.p() > 0) r.noalias() -= design_.x_matrix(i) * eval.beta;
    quad += kernel.quad_form(i, r);
  }
  quad = std::max(quad, 0.0);
  eval.residual_quad = quad;
  const double n = static_cast<double>(n_total());
  eval.v2 = quad / n;
  if (quad <= degenerate_threshold_) {
    eval.degenerate = true;
    eval.neg2loglik = std::numeric_limits<double>::infinity();
    return eval;
  }
  eval.neg2loglik =
      n * std::log(2.0 * std::numbers::pi) + n * std::log(eval.v2) + kernel.log_det() + n;
  return eval;
}

LikelihoodEval ProfileLikelihood::profile_objective(const VectorXd& theta) const {
  return profile_objective(Kernel(design_, theta));
}

double ProfileLikelihood::neg2loglik(const VectorXd& theta, double v2) const {
  if (!(v2 > 0.0)) throw DomainError("v2 must be > 0");
  const Kernel kernel(design_, theta);
  const auto [v2_prof, quad] = profiled_v2(kernel);
  const double n = static_cast<double>(n_total());
  return n * std::log(2.0 * std::numbers::pi) + n * std::log(v2) + kernel.log_det() +
         quad / v2;
}

double ProfileLikelihood::grad_v2(const VectorXd& theta, double v2) const {
  if (!(v2 > 0.0)) throw DomainError("v2 must be > 0");
  const Kernel kernel(design_, theta);
  const auto [v2_prof, quad] = profiled_v2(kernel);
  const double n = static_cast<double>(n_total());
  return n / v2 - quad / (v2 * v2);
}

VectorXd ProfileLikelihood::grad_theta(const Kernel& kernel, const VectorXd& beta,
                                       double v2) const {
  if (!(v2 > 0.0)) throw DomainError("v2 must be > 0");
  const int q = design_.q();
  VectorXd grad = VectorXd::Zero(q);
  for (int i = 0; i < design_.data().m(); ++i) {
    const Cluster& c = design_.data().cluster(i);
    VectorXd r = c.y;
    if (design_.p() > 0) r.noalias() -= design_.x_matrix(i) * beta;
    const VectorXd w = kernel.solve(i, r);  // H_i^{-1} (y_i - X_i beta)
    for (int s = 0; s < q; ++s) {
      const VectorXd z = design_.z_col(i, s);
      const double zw = z.dot(w);
      grad[s] += kernel.quad_form(i, z) - zw * zw / v2;
    }
  }
  return grad;
}

VectorXd ProfileLikelihood::grad_theta(const VectorXd& theta, double v2) const {
  const Kernel kernel(design_, theta);
  return grad_theta(kernel, gls_beta(kernel), v2);
}

}  // namespace clmm
