#pragma once

#include <Eigen/Dense>

#include "patchlab/data.hpp"
#include "patchlab/decompose.hpp"
#include "patchlab/model.hpp"

namespace patchlab {

// Packed per-patch network contributions in the SlotIndex layout: one entry
// per feature direction (shared across its class members) and one per
// non-feature training patch.  The mixing objective is a function of this
// vector alone.
Eigen::VectorXd compute_z(const Weights& W, const Dataset& ds);

// Unpack to the n x P per-sample view; feature patches read their class slot.
Eigen::MatrixXd expand_z(const Dataset& ds, const Eigen::VectorXd& Z);

double h_value(const Dataset& ds, const Eigen::VectorXd& Z, int threads = 1);
Eigen::VectorXd h_grad(const Dataset& ds, const Eigen::VectorXd& Z, int threads = 1);

// Dense Hessian of h; gated to dim(Z) <= 200 because it enumerates every
// ordered sample pair and patch subset.
Eigen::MatrixXd h_hessian(const Dataset& ds, const Eigen::VectorXd& Z);

// Jacobian dz/dW for a single neuron per sign, stacked [d(w_plus); d(w_minus)]
// so that grad_W L = J * grad h.
Eigen::MatrixXd jacobian_matrix(const Weights& W, const Dataset& ds);
double jacobian_min_singular(const Weights& W, const Dataset& ds);

// Per-class uniform contribution values at the population optimum of the
// mixing objective, from the two nested scalar root-finders.
struct GlobalMin {
  double z1_star = 0.0;
  double zm1_star = 0.0;
  double res1 = 0.0, resm1 = 0.0;  // stationarity residuals at the returned point
  int iterations = 0;
};

GlobalMin solve_global_minimum(int n_plus, int n_minus, int P);

// Stationarity function g_s whose simultaneous roots define the optimum.
double uniform_stationarity(int n_self, int n_other, int P, double z_self,
                            double z_other);

// Packed Z with every entry of class s at s * z_s^*.
Eigen::VectorXd build_zhat(const Dataset& ds, const GlobalMin& gm);

struct UniformReport {
  double max_dev = 0.0;      // max_{i,p} |y_i z_i^(p) - z*_{y_i}|
  double grad_h_norm = 0.0;  // |grad h| at the trained contributions
  double z1_star = 0.0, zm1_star = 0.0;
};

UniformReport verify_uniform_minimum(const Weights& W, const Dataset& ds,
                                     const GlobalMin& gm);

}  // namespace patchlab
