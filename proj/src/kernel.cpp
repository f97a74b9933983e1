#include "clmm/kernel.hpp"

#include <cmath>
#include <numeric>

namespace clmm {

Kernel::Kernel(const DesignView& design, const VectorXd& theta) : theta_(theta) {
  std::vector<int> order(static_cast<size_t>(design.q()));
  std::iota(order.begin(), order.end(), 0);
  build(design, order);
}

Kernel::Kernel(const DesignView& design, const VectorXd& theta, std::span<const int> order)
    : theta_(theta) {
  build(design, order);
}

void Kernel::build(const DesignView& design, std::span<const int> order) {
  const int q = design.q();
  if (theta_.size() != q)
    throw DimensionError("theta length " + std::to_string(theta_.size()) +
                         " does not match q(gamma) = " + std::to_string(q));
  for (int s = 0; s < q; ++s) {
    if (!(theta_[s] >= 0.0) || !std::isfinite(theta_[s]))
      throw DomainError("theta[" + std::to_string(s + 1) + "] must be finite and >= 0");
  }
  if (static_cast<int>(order.size()) != q)
    throw DimensionError("insertion order must cover all gamma columns");
  order_.assign(order.begin(), order.end());

  const Dataset& data = design.data();
  states_.resize(static_cast<size_t>(data.m()));
  for (int i = 0; i < data.m(); ++i) {
    const Eigen::Index n = data.cluster(i).rows();
    ClusterState& st = states_[static_cast<size_t>(i)];
    st.U.resize(n, q);
    st.d.resize(q);
    for (int t = 0; t < q; ++t) {
      const int s = order_[static_cast<size_t>(t)];
      // u_t = H_{i,t-1}^{-1} z_(s) using the updates inserted so far
      VectorXd u = design.z_col(i, s);
      for (int r = 0; r < t; ++r) {
        const int sr = order_[static_cast<size_t>(r)];
        const double w = theta_[sr] * st.U.col(r).dot(design.z_col(i, s)) / st.d[r];
        u.noalias() -= w * st.U.col(r);
      }
      st.U.col(t) = u;
      st.d[t] = 1.0 + theta_[s] * design.z_col(i, s).dot(u);
    }
  }
}

VectorXd Kernel::solve(int i, const VectorXd& x) const {
  const ClusterState& st = states_[static_cast<size_t>(i)];
  if (x.size() != st.U.rows())
    throw DimensionError("vector length " + std::to_string(x.size()) +
                         " does not match cluster size " + std::to_string(st.U.rows()));
  VectorXd out = x;
  for (int t = 0; t < st.d.size(); ++t) {
    const int s = order_[static_cast<size_t>(t)];
    out.noalias() -= (theta_[s] * st.U.col(t).dot(x) / st.d[t]) * st.U.col(t);
  }
  return out;
}

double Kernel::quad_form(int i, const VectorXd& x, const VectorXd& y) const {
  const ClusterState& st = states_[static_cast<size_t>(i)];
  if (x.size() != st.U.rows() || y.size() != st.U.rows())
    throw DimensionError("quad_form vector length does not match cluster size");
  double out = x.dot(y);
  for (int t = 0; t < st.d.size(); ++t) {
    const int s = order_[static_cast<size_t>(t)];
    out -= theta_[s] * st.U.col(t).dot(x) * st.U.col(t).dot(y) / st.d[t];
  }
  return out;
}

double Kernel::log_det(int i) const {
  const ClusterState& st = states_[static_cast<size_t>(i)];
  double out = 0.0;
  for (int t = 0; t < st.d.size(); ++t) out += std::log(st.d[t]);
  return out;
}

double Kernel::log_det() const {
  double out = 0.0;
  for (int i = 0; i < clusters(); ++i) out += log_det(i);
  return out;
}

}  // namespace clmm
