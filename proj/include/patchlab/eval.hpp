#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "patchlab/data.hpp"
#include "patchlab/method.hpp"
#include "patchlab/model.hpp"

namespace patchlab {

// Accuracy summary for one trained model. All rates are fractions of strict
// sign agreements y * f > 0; a zero output counts as an error so reports are
// deterministic. aug_acc is absent for trainers without masked points.
struct AccuracyReport {
  double train_acc = 0.0;
  std::optional<double> aug_acc;
  double test_acc = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // 95% Wilson interval on test_acc
  double tier_acc[3] = {0.0, 0.0, 0.0};  // conditional on common/rare/extreme
  long tier_n[3] = {0, 0, 0};
  long n_test = 0;
  std::uint64_t seed = 0;
};

double train_accuracy(const Weights& W, const Dataset& ds);

// Fraction of correct predictions over all n * binom(P, C) points with the
// patches of one C-subset zeroed. C = 0 reduces to train_accuracy.
double augmented_accuracy(const Weights& W, const Dataset& ds, int C);

// Monte-Carlo estimate on fresh draws from the generative law. Draw j owns
// the engine make_engine(derive_seed(seed, kTestStream), j), so the estimate
// is independent of the thread count and never shares a stream with the
// training set even when the seeds coincide.
AccuracyReport test_accuracy(const Weights& W, const FeatureBank& bank,
                             const DataConfig& cfg, long n_test,
                             std::uint64_t seed, int threads = 1);

// 95% Wilson score interval for k successes in n trials, clamped to [0, 1].
std::pair<double, double> wilson_interval(long k, long n);

// Readout gap mean_nu phi(<w_plus_nu, v>) - mean_nu phi(<w_minus_nu, v>) for
// every signed feature vector, +1 block then -1 block. Positive entries in
// the +1 block and negative entries in the -1 block mean the feature is
// learned with the correct orientation.
std::vector<double> feature_output_trace(const Weights& W, const FeatureBank& bank);

// Closed-form test accuracy implied by which frequency tiers the trainer
// learns: plain descent learns the common tier only, the masking trainer adds
// the rare tier, the mixing trainer learns all of them. A draw whose feature
// stays unlearned is decided by the feature-noise coin in its dominant patch,
// so each unlearned tier contributes half its frequency mass as errors.
double predicted_test_accuracy(const DataConfig& cfg, Method method);

// Tier indices (0 common, 1 rare, 2 extreme) the trainer leaves unlearned.
std::vector<int> unlearned_tiers(Method method);

std::string accuracy_json(const AccuracyReport& rep);
AccuracyReport accuracy_from_json(const std::string& text);

// Per-tier table: tier,draws,accuracy rows plus an overall row.
std::string conditional_csv(const AccuracyReport& rep);

}  // namespace patchlab
