#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "patchlab/data.hpp"
#include "patchlab/method.hpp"
#include "patchlab/model.hpp"

namespace patchlab {

// Signed coefficients of the weight displacement in the span of the feature
// vectors and the normalized training noise patches:
//   w_s - w_s^0 = sum_k gamma[s](+1,k) v_{+1,k} * sgn - ...  (see project_coefficients)
// gamma[si] is 2 x K with row 0 for the s' = +1 features and row 1 for
// s' = -1; rho[si] is n x P with the entry at each sample's feature patch
// fixed at zero.  si = 0 for s = +1, si = 1 for s = -1.
struct CoeffTable {
  Eigen::MatrixXd gamma[2];
  Eigen::MatrixXd rho[2];
  double residual_norm = 0.0;
  double solver_gap = 0.0;

  static CoeffTable zeros(int K, int n, int P);
  double max_abs() const;
};

// Column layout shared by the projection basis and the packed contribution
// vector: 2K feature slots (s = +1 with k ascending, then s = -1), then for
// each sample its P-1 non-feature patches in ascending patch order.
struct SlotIndex {
  int K = 0, n = 0, P = 0;
  std::vector<int> p_star;

  int dim() const { return 2 * K + n * (P - 1); }
  int feat(int s, int k) const { return s > 0 ? k : K + k; }
  // p must differ from sample i's feature patch.
  int patch(int i, int p) const {
    const int off = p < p_star[i] ? p : p - 1;
    return 2 * K + i * (P - 1) + off;
  }
};

SlotIndex make_slot_index(const Dataset& ds);

// Exact least-squares read-off of the coefficients from trained weights
// (single neuron per sign).  Solves against the feature/raw-noise basis twice
// (QR and normal equations) and records the worst disagreement; throws when
// the basis is numerically dependent (condition above 1e10), naming the most
// correlated column pair.
class CoeffProjector {
 public:
  explicit CoeffProjector(const Dataset& ds);

  CoeffTable project(const Weights& W, const Weights& W0) const;
  double condition() const { return cond_; }
  double min_singular() const { return smin_; }

 private:
  const Dataset* ds_;
  SlotIndex idx_;
  Eigen::MatrixXd basis_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::LDLT<Eigen::MatrixXd> normal_;
  double cond_ = 0.0, smin_ = 0.0;
};

CoeffTable project_coefficients(const Weights& W, const Weights& W0, const Dataset& ds);

// Rebuilds the weights a coefficient table describes; inverse of
// project_coefficients up to solver tolerance.
Weights reconstruct_weights(const CoeffTable& tab, const Weights& W0, const Dataset& ds);

// Running the training recursion forward: one step consumes the per-patch
// drive matrix and the pre-step inner products, so the table after step t
// matches the projection of W^(t) exactly in exact arithmetic.
class CoeffRecursion {
 public:
  explicit CoeffRecursion(const Dataset& ds);

  void step(Method method, double eta, const Eigen::MatrixXd& drive,
            const Eigen::MatrixXd& t_plus, const Eigen::MatrixXd& t_minus,
            const Weights& W);
  const CoeffTable& table() const { return tab_; }

 private:
  const Dataset* ds_;
  CoeffTable tab_;
};

struct EInitClause {
  std::string name;
  std::string inequality;
  bool pass = false;
  double margin = 0.0;  // relative slack of the worst member, negative on failure
};

struct EInitReport {
  std::vector<EInitClause> clauses;
  bool all_pass = false;
  double min_singular = 0.0;
};

EInitReport check_e_init(const Dataset& ds, const Weights& W0, double sigma0);

// Worst-case gaps between raw weight readouts and the coefficient table, one
// scalar per alignment family (linear overlap and activation value, for own-
// and cross-class features and noise, plus the shifted dominant patches).
struct ApproxErrorReport {
  double feat_self_lin = 0.0, feat_self_phi = 0.0;
  double feat_opp_lin = 0.0, feat_opp_phi = 0.0;
  double noise_self_lin = 0.0, noise_self_phi = 0.0;
  double noise_opp_lin = 0.0, noise_opp_phi = 0.0;
  double dom_self_phi = 0.0, dom_opp_phi = 0.0;

  double max_gap() const;
};

ApproxErrorReport approx_error_audit(const Weights& W, const CoeffTable& tab,
                                     const Dataset& ds);

}  // namespace patchlab
