#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace patchlab {

struct DataConfig {
  int d = 0;  // patch dimension
  int n = 0;  // training samples
  int P = 0;  // patches per sample
  std::vector<double> rho;  // feature frequencies per class, nonincreasing, sum 1
  int tiers[3] = {0, 0, 0};  // common/rare/extreme feature counts, sum K
  double sigma_d = 0.0;      // dominant noise std
  double sigma_b = 0.0;      // background noise std
  double alpha = 0.0;        // feature-noise strength, in (0,1)
  std::uint64_t seed = 0;

  int K() const { return static_cast<int>(rho.size()); }
  int tier_of(int k) const {
    if (k < tiers[0]) return 0;
    if (k < tiers[0] + tiers[1]) return 1;
    return 2;
  }
  void validate() const;  // throws std::invalid_argument with the failed rule
};

// 2K orthonormal feature vectors, fixed to the first 2K standard basis
// directions: v_{+1,k} = e_k and v_{-1,k} = e_{K+k} (k is 0-based). Keeping
// them on coordinate axes makes feature/noise orthogonality exact.
struct FeatureBank {
  int d = 0;
  int K = 0;
  int col(int s, int k) const { return s > 0 ? k : K + k; }
  Eigen::VectorXd vec(int s, int k) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    v[col(s, k)] = 1.0;
    return v;
  }
};

struct Sample {
  Eigen::MatrixXd X;  // d x P, column p is patch p
  int y = 0;          // label, +1 or -1
  int k = 0;          // feature index, 0-based
  int p_star = 0;     // feature patch position
  int p_tilde = 0;    // dominant noise patch position
  int fn_sign = 0;    // sign s of the alpha * v_{s,0} term in patch p_tilde
  std::vector<Eigen::VectorXd> noise;  // raw xi^(p); empty at p_star
  std::vector<double> noise_sq;        // ||xi^(p)||^2; 0 at p_star
};

struct Dataset {
  DataConfig config;
  FeatureBank bank;
  std::vector<Sample> samples;
  std::vector<int> V[2];                  // V[0] = indices with y=+1, V[1] = y=-1
  std::vector<std::vector<int>> Vsk[2];   // Vsk[si][k]
  std::vector<int> F[2];                  // F[0] = fn_sign=+1, F[1] = fn_sign=-1

  int n() const { return static_cast<int>(samples.size()); }
  static int sidx(int s) { return s > 0 ? 0 : 1; }
};

// N(0, sigma^2 * Lambda) with Lambda = I minus the feature-subspace projector:
// draw N(0, sigma^2 I) and zero the 2K feature coordinates.
Eigen::VectorXd sample_lambda_noise(const FeatureBank& bank, double sigma,
                                    std::mt19937_64& rng);

// One draw from the generative law. Decision order per sample is fixed:
// label, feature index (inverse CDF on rho with half-open bins), p_star,
// p_tilde, feature-noise sign, then noise patches in ascending patch order.
Sample sample_point(const FeatureBank& bank, const DataConfig& cfg,
                    std::mt19937_64& rng);

// Identical law with fresh noise; test points for accuracy estimates.
Sample sample_test_point(const FeatureBank& bank, const DataConfig& cfg,
                         std::mt19937_64& rng);

Dataset generate_dataset(const DataConfig& cfg);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace patchlab
