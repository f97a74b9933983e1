#include "clmm/prediction.hpp"

#include <cmath>

namespace clmm {

namespace {

std::vector<VectorXd> ls_from_residuals(const DesignView& design,
                                        const std::vector<VectorXd>& residuals) {
  const int q = design.q();
  std::vector<VectorXd> out(residuals.size());
  for (int i = 0; i < design.data().m(); ++i) {
    const MatrixXd zi = design.z_matrix(i);
    const MatrixXd gram = zi.transpose() * zi;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    if (q > 0 && eig.eigenvalues().minCoeff() <=
                     1e-12 * std::max(eig.eigenvalues().maxCoeff(), 1.0)) {
      throw RankError("Z(gamma) rank deficient in cluster " +
                          std::to_string(design.data().cluster(i).id),
                      design.spec().gamma);
    }
    out[static_cast<size_t>(i)] =
        q == 0 ? VectorXd()
               : eig.eigenvectors() *
                     (eig.eigenvalues().cwiseInverse().asDiagonal() *
                      (eig.eigenvectors().transpose() *
                       (zi.transpose() * residuals[static_cast<size_t>(i)])));
  }
  return out;
}

std::vector<VectorXd> residuals_at(const DesignView& design, const VectorXd& beta) {
  std::vector<VectorXd> out(static_cast<size_t>(design.data().m()));
  for (int i = 0; i < design.data().m(); ++i) {
    VectorXd r = design.data().cluster(i).y;
    if (design.p() > 0) r.noalias() -= design.x_matrix(i) * beta;
    out[static_cast<size_t>(i)] = std::move(r);
  }
  return out;
}

}  // namespace

PredictionResult blup(const Dataset& data, const ModelSpec& spec, const MLFit& fit) {
  if (fit.alpha != spec.alpha || fit.gamma != spec.gamma)
    throw InvalidSpecError("fit belongs to a different model than the supplied spec");
  const DesignView design(data, spec);
  if (fit.theta_hat.size() != design.q() ||
      fit.beta_hat.size() != design.p())
    throw DimensionError("fit dimensions do not match the dataset");

  const Kernel kernel(design, fit.theta_hat);
  const std::vector<VectorXd> residuals = residuals_at(design, fit.beta_hat);

  PredictionResult out;
  out.b_blup.resize(static_cast<size_t>(data.m()));
  out.fitted.resize(static_cast<size_t>(data.m()));
  for (int i = 0; i < data.m(); ++i) {
    const VectorXd w = kernel.solve(i, residuals[static_cast<size_t>(i)]);
    VectorXd b(design.q());
    for (int s = 0; s < design.q(); ++s)
      b[s] = fit.theta_hat[s] * design.z_col(i, s).dot(w);
    if (design.q() == 0)
      out.fitted[static_cast<size_t>(i)] = VectorXd::Zero(data.cluster(i).rows());
    else
      out.fitted[static_cast<size_t>(i)] = design.z_matrix(i) * b;
    out.b_blup[static_cast<size_t>(i)] = std::move(b);
  }
  out.b_ls = ls_predict(data, spec);
  return out;
}

std::vector<VectorXd> ls_predict(const Dataset& data, const ModelSpec& spec) {
  const DesignView design(data, spec);
  VectorXd beta_ols;
  if (design.p() > 0) {
    const ProfileLikelihood like(data, spec);
    beta_ols = like.gls_beta(Kernel(design, VectorXd::Zero(design.q())));
  }
  return ls_from_residuals(design, residuals_at(design, beta_ols));
}

double prediction_gap(const Dataset& data, const ModelSpec& spec,
                      const std::vector<double>& b_true, double sigma1_sq, double v2) {
  if (spec.p_alpha() != 0 || spec.q_gamma() != 1)
    throw InvalidSpecError("prediction_gap needs p(alpha) = 0 and q(gamma) = 1");
  if (static_cast<int>(b_true.size()) != data.m())
    throw DimensionError("b_true must have one entry per cluster");
  if (!(v2 > 0.0)) throw DomainError("v2 must be > 0");
  if (!(sigma1_sq >= 0.0)) throw DomainError("sigma1_sq must be >= 0");

  const DesignView design(data, spec);
  const double theta = sigma1_sq / v2;

  double gap = 0.0;
  for (int i = 0; i < data.m(); ++i) {
    const VectorXd z = design.z_col(i, 0);
    const double zz = z.squaredNorm();
    if (!(zz > 0.0))
      throw RankError("zero z column in cluster " + std::to_string(data.cluster(i).id),
                      spec.gamma);
    const VectorXd& y = data.cluster(i).y;
    const double b_ls = z.dot(y) / zz;
    // scalar rank-one closed form, stable for any theta
    const double b_bl = theta * z.dot(y) / (1.0 + theta * zz);
    const double b0 = b_true[static_cast<size_t>(i)];
    gap += (b_ls - b0) * (b_ls - b0) * zz - (b_bl - b0) * (b_bl - b0) * zz;
  }
  return gap;
}

double expected_gap(int m, double v0_sq, double sigma1_sq) {
  if (m <= 4) throw DomainError("expected_gap is undefined for m <= 4");
  if (!(v0_sq > 0.0) || !(sigma1_sq > 0.0))
    throw DomainError("expected_gap needs v0_sq > 0 and sigma1_sq > 0");
  return m * (m - 4) * v0_sq * v0_sq / ((m - 2) * sigma1_sq);
}

}  // namespace clmm
