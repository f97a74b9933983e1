#pragma once

#include "clmm/dataset.hpp"
#include "clmm/rng.hpp"

namespace clmm::test {

// Random clustered dataset drawn from the mixed-effects generating model.
struct RandomInstance {
  int m = 2;
  int n_min = 2, n_max = 8;
  int p = 2, q = 2;
  double theta_scale = 1.0;   // random-effect size
  double beta_scale = 1.0;
};

inline Dataset make_dataset(NormalStream& rng, const RandomInstance& ri) {
  std::vector<Cluster> clusters;
  for (int i = 0; i < ri.m; ++i) {
    const int span = ri.n_max - ri.n_min + 1;
    const int n = ri.n_min + static_cast<int>(rng.next_u64() % static_cast<unsigned>(span));
    Cluster c;
    c.id = i + 1;
    c.X.resize(n, ri.p);
    c.Z.resize(n, ri.q);
    c.y.resize(n);
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < ri.p; ++j) c.X(r, j) = rng.normal();
      for (int k = 0; k < ri.q; ++k) c.Z(r, k) = rng.normal();
    }
    VectorXd b(ri.q);
    for (int k = 0; k < ri.q; ++k) b[k] = std::sqrt(ri.theta_scale) * rng.normal();
    VectorXd beta(ri.p);
    for (int j = 0; j < ri.p; ++j) beta[j] = ri.beta_scale * rng.normal();
    for (int r = 0; r < n; ++r) c.y[r] = rng.normal();
    c.y += c.X * beta + c.Z * b;
    clusters.push_back(std::move(c));
  }
  return Dataset(std::move(clusters));
}

inline ModelSpec full_spec(const Dataset& data) {
  ModelSpec spec;
  for (int j = 1; j <= data.p(); ++j) spec.alpha.push_back(j);
  for (int k = 1; k <= data.q(); ++k) spec.gamma.push_back(k);
  return spec;
}

inline VectorXd random_theta(NormalStream& rng, int q, double max_value) {
  VectorXd theta(q);
  for (int s = 0; s < q; ++s) theta[s] = max_value * rng.uniform();
  return theta;
}

}  // namespace clmm::test
