#pragma once

#include <random>

#include "patchlab/data.hpp"
#include "patchlab/model.hpp"
#include "patchlab/rng.hpp"

namespace patchlab::testutil {

// Small instance with every branch populated: three features, one per tier.
inline DataConfig tiny_config(std::uint64_t seed, int d = 20, int n = 6) {
  DataConfig cfg;
  cfg.d = d;
  cfg.n = n;
  cfg.P = 3;
  cfg.rho = {0.5, 0.3, 0.2};
  cfg.tiers[0] = 1;
  cfg.tiers[1] = 1;
  cfg.tiers[2] = 1;
  cfg.sigma_d = 0.6;
  cfg.sigma_b = 0.3;
  cfg.alpha = 0.2;
  cfg.seed = seed;
  return cfg;
}

// Working-scale instance used by the experiment driver.
inline DataConfig desk_config(std::uint64_t seed) {
  DataConfig cfg;
  cfg.d = 2000;
  cfg.n = 300;
  cfg.P = 3;
  cfg.rho = {0.8, 0.15, 0.05};
  cfg.tiers[0] = 1;
  cfg.tiers[1] = 1;
  cfg.tiers[2] = 1;
  cfg.sigma_d = 0.25;
  cfg.sigma_b = 0.15;
  cfg.alpha = 0.005;
  cfg.seed = seed;
  return cfg;
}

inline Weights zero_weights(int d, int m = 1) {
  Weights W;
  W.w_plus = Eigen::MatrixXd::Zero(m, d);
  W.w_minus = Eigen::MatrixXd::Zero(m, d);
  return W;
}

inline Weights random_weights(int d, int m, std::uint64_t seed, double scale) {
  auto rng = make_engine(seed, 7);
  std::normal_distribution<double> g(0.0, scale);
  Weights W = zero_weights(d, m);
  for (int nu = 0; nu < m; ++nu)
    for (int j = 0; j < d; ++j) W.w_plus(nu, j) = g(rng);
  for (int nu = 0; nu < m; ++nu)
    for (int j = 0; j < d; ++j) W.w_minus(nu, j) = g(rng);
  return W;
}

}  // namespace patchlab::testutil
