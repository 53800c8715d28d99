#pragma once

#include <vector>

#include <Eigen/Dense>

namespace patchlab {

// Enumeration of all 2^P patch subsets as bitmasks, with the mixture weight
// w(S) = 1 / ((P+1) * binom(P,|S|)) and the retained fraction lam(S) = |S|/P.
// Weights sum to 1 across masks.
struct SubsetTable {
  int P = 0;
  std::vector<double> weight;  // indexed by mask, size 2^P
  std::vector<double> lam;
};

SubsetTable make_subset_table(int P);

// Raw pairwise accumulation over ordered sample pairs (a,b), including a == b,
// and all patch subsets S.  For the mixed point carrying a's patches on S and
// b's patches off S, with F = sum of its per-patch contributions:
//   h_raw    = sum w(S) * [lam * loss(y_a F) + (1-lam) * loss(y_b F)]
//   B(i,p)   = sum over terms where patch (i,p) is live of
//              w(S) * ( -lam * y_a * loss'(y_a F) - (1-lam) * y_b * loss'(y_b F) )
// so that the mixture objective is h_raw / n^2 and its derivative in the
// per-patch contribution z_i^(p) is -B(i,p) / n^2.
struct CutmixAccum {
  double h_raw = 0.0;
  Eigen::MatrixXd B;  // n x P
};

// zmat is n x P: row i holds the P per-patch contributions of sample i.
// Deterministic: a fixed chunk partition of the outer loop is reduced in
// ascending order regardless of thread count.
CutmixAccum cutmix_accumulate(const Eigen::MatrixXd& zmat,
                              const std::vector<int>& labels,
                              const SubsetTable& subsets, int threads = 1);

}  // namespace patchlab
