#pragma once

#include <span>

#include "clmm/dataset.hpp"

namespace clmm {

// Per-cluster factorization of H_i(gamma, theta) = I + sum_{k in gamma}
// theta_k z_{i,k} z_{i,k}' through iterated rank-one updates:
//
//   u_{i,s} = H_{i,s-1}^{-1} z_{i,(s)},   d_{i,s} = 1 + theta_(s) z_{i,(s)}' u_{i,s},
//
// so that H_i^{-1} x = x - sum_s theta_(s) u_{i,s} (u_{i,s}' x) / d_{i,s} and
// log det H_i = sum_s log d_{i,s}. Solves and quadratic forms cost O(n_i q).
class Kernel {
 public:
  Kernel(const DesignView& design, const VectorXd& theta);
  // Insertion order override (0-based positions into gamma); outputs are
  // order-invariant, the canonical constructor uses increasing index order.
  Kernel(const DesignView& design, const VectorXd& theta, std::span<const int> order);

  int clusters() const { return static_cast<int>(states_.size()); }
  const VectorXd& theta() const { return theta_; }

  // H_i^{-1} x.
  VectorXd solve(int i, const VectorXd& x) const;
  // x' H_i^{-1} y; symmetric in (x, y).
  double quad_form(int i, const VectorXd& x, const VectorXd& y) const;
  double quad_form(int i, const VectorXd& x) const { return quad_form(i, x, x); }
  // log det H(gamma, theta) over all clusters (or one of them).
  double log_det() const;
  double log_det(int i) const;

 private:
  struct ClusterState {
    MatrixXd U;          // n_i x q(gamma), column s = u_{i,s}
    VectorXd d;          // q(gamma), each >= 1
  };
  void build(const DesignView& design, std::span<const int> order);

  std::vector<ClusterState> states_;
  VectorXd theta_;          // in gamma order
  std::vector<int> order_;  // insertion order, positions into gamma
};

}  // namespace clmm
