#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "patchlab/activation.hpp"

namespace patchlab {

struct InitConfig {
  double sigma0 = 1e-4;
  std::uint64_t seed = 0;
};

// Trainable first-layer filters. Row nu of w_plus drives output sign +1,
// row nu of w_minus drives sign -1. With m > 1 the network output averages
// the m neurons of each sign so its scale is comparable to m = 1.
struct Weights {
  Eigen::MatrixXd w_plus;   // m x d
  Eigen::MatrixXd w_minus;  // m x d
  ActivationParams act;

  int m() const { return static_cast<int>(w_plus.rows()); }
  int d() const { return static_cast<int>(w_plus.cols()); }
};

struct Gradient {
  Eigen::MatrixXd plus;
  Eigen::MatrixXd minus;

  double squared_norm() const {
    return plus.squaredNorm() + minus.squaredNorm();
  }
};

// f_W(X) = mean_nu sum_p phi(<w_plus_nu, x^(p)>) - mean_nu sum_p phi(<w_minus_nu, x^(p)>)
double forward(const Weights& W, const Eigen::MatrixXd& X);

// Gradient of the single-sample loss l(y * f_W(X)) with respect to both blocks.
Gradient grad_sample(const Weights& W, const Eigen::MatrixXd& X, int y);

// i.i.d. N(0, sigma0^2) entries, deterministic per seed.
Weights init_weights(int d, int m, const InitConfig& init, const ActivationParams& act);

// Flat binary checkpoint: header (d, m, beta, r, sigma0, seed), then the
// current blocks and the frozen initialization snapshot, row-major.
void save_weights(const std::string& path, const Weights& W, const Weights& W0,
                  const InitConfig& init);
struct WeightsFile {
  Weights W;
  Weights W0;
  InitConfig init;
};
WeightsFile load_weights(const std::string& path);

}  // namespace patchlab
