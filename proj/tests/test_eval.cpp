#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "common.hpp"
#include "patchlab/eval.hpp"
#include "patchlab/train.hpp"

using namespace patchlab;
using namespace patchlab::testutil;

TEST_CASE("zero weights lose every point under the tie rule") {
  const Dataset ds = generate_dataset(tiny_config(11));
  const Weights W = zero_weights(20);
  CHECK(train_accuracy(W, ds) == 0.0);
  CHECK(augmented_accuracy(W, ds, 0) == 0.0);
  CHECK(augmented_accuracy(W, ds, 1) == 0.0);
  const AccuracyReport rep = test_accuracy(W, ds.bank, ds.config, 500, 3);
  CHECK(rep.test_acc == 0.0);
  CHECK(rep.ci_lo == 0.0);
  CHECK(rep.ci_hi < 0.02);
  for (double v : feature_output_trace(W, ds.bank)) CHECK(v == 0.0);
}

TEST_CASE("empty mask set reduces to the training accuracy") {
  const Dataset ds = generate_dataset(tiny_config(12, 24, 8));
  TrainConfig tc;
  tc.method = Method::ERM;
  tc.T = 30;
  const Weights W0 = init_weights(24, 1, InitConfig{1e-3, 5}, ActivationParams{});
  const RunResult res = run_training(W0, ds, tc);
  CHECK(augmented_accuracy(res.W, ds, 0) == train_accuracy(res.W, ds));
}

TEST_CASE("accuracy columns in the trace match the standalone measurements") {
  const Dataset ds = generate_dataset(tiny_config(13, 24, 8));
  const Weights W0 = init_weights(24, 1, InitConfig{1e-3, 6}, ActivationParams{});

  TrainConfig erm;
  erm.method = Method::ERM;
  erm.T = 25;
  const RunResult r1 = run_training(W0, ds, erm);
  CHECK(r1.trace.back().acc_train == train_accuracy(r1.W, ds));

  TrainConfig cut;
  cut.method = Method::CUTOUT;
  cut.C = 1;
  cut.T = 25;
  const RunResult r2 = run_training(W0, ds, cut);
  CHECK(r2.trace.back().acc_aug == augmented_accuracy(r2.W, ds, 1));
}

TEST_CASE("masking only background patches keeps a fitted prediction") {
  const Dataset ds = generate_dataset(tiny_config(14, 30, 8));
  TrainConfig tc;
  tc.method = Method::ERM;
  tc.T = 120;
  const Weights W0 = init_weights(30, 1, InitConfig{1e-3, 7}, ActivationParams{});
  const RunResult res = run_training(W0, ds, tc);
  REQUIRE(train_accuracy(res.W, ds) == 1.0);
  for (const Sample& smp : ds.samples) {
    int p_bg = -1;
    for (int p = 0; p < 3; ++p)
      if (p != smp.p_star && p != smp.p_tilde) p_bg = p;
    REQUIRE(p_bg >= 0);
    Eigen::MatrixXd Xm = smp.X;
    Xm.col(p_bg).setZero();
    CHECK(smp.y * forward(res.W, Xm) > 0.0);
  }
}

TEST_CASE("test evaluation is independent of the thread count") {
  const Dataset ds = generate_dataset(tiny_config(15));
  const Weights W = random_weights(20, 2, 99, 0.3);
  const AccuracyReport a = test_accuracy(W, ds.bank, ds.config, 701, 42, 1);
  const AccuracyReport b = test_accuracy(W, ds.bank, ds.config, 701, 42, 4);
  CHECK(a.test_acc == b.test_acc);
  CHECK(a.ci_lo == b.ci_lo);
  CHECK(a.ci_hi == b.ci_hi);
  for (int t = 0; t < 3; ++t) {
    CHECK(a.tier_n[t] == b.tier_n[t]);
    CHECK(a.tier_acc[t] == b.tier_acc[t]);
  }
}

TEST_CASE("overall rate is the draw-weighted average of the tier rates") {
  const Dataset ds = generate_dataset(tiny_config(16));
  const Weights W = random_weights(20, 1, 100, 0.5);
  const AccuracyReport rep = test_accuracy(W, ds.bank, ds.config, 2000, 8);
  double weighted = 0.0;
  long total = 0;
  for (int t = 0; t < 3; ++t) {
    weighted += double(rep.tier_n[t]) * rep.tier_acc[t];
    total += rep.tier_n[t];
  }
  CHECK(total == rep.n_test);
  CHECK(weighted / double(rep.n_test) == doctest::Approx(rep.test_acc).epsilon(1e-12));
}

TEST_CASE("tier draw shares follow the configured frequencies") {
  DataConfig cfg = desk_config(1);
  cfg.d = 40;  // cheap draws, same frequencies
  FeatureBank bank{cfg.d, cfg.K()};
  const Weights W = zero_weights(cfg.d);
  const AccuracyReport rep = test_accuracy(W, bank, cfg, 20000, 55);
  CHECK(double(rep.tier_n[0]) / 20000 == doctest::Approx(0.8).epsilon(0.02));
  CHECK(double(rep.tier_n[1]) / 20000 == doctest::Approx(0.15).epsilon(0.08));
  CHECK(double(rep.tier_n[2]) / 20000 == doctest::Approx(0.05).epsilon(0.12));
}

TEST_CASE("Wilson interval endpoints behave at the boundaries and center") {
  const auto [lo0, hi0] = wilson_interval(0, 100);
  CHECK(lo0 == 0.0);
  CHECK(hi0 > 0.0);
  CHECK(hi0 < 0.05);
  const auto [lo1, hi1] = wilson_interval(100, 100);
  CHECK(hi1 == 1.0);
  CHECK(lo1 > 0.95);
  const auto [lo, hi] = wilson_interval(10000, 20000);
  CHECK(lo + hi == doctest::Approx(1.0).epsilon(1e-12));
  // half width near 1.96 * sqrt(0.25 / n), the basis for the default n_test
  CHECK((hi - lo) / 2 > 0.0068);
  CHECK((hi - lo) / 2 < 0.0070);
  CHECK_THROWS_AS(wilson_interval(5, 0), std::invalid_argument);
  CHECK_THROWS_AS(wilson_interval(-1, 10), std::invalid_argument);
  CHECK_THROWS_AS(wilson_interval(11, 10), std::invalid_argument);
}

TEST_CASE("predicted accuracies plug the tier masses into the learned sets") {
  const DataConfig cfg = desk_config(1);
  CHECK(predicted_test_accuracy(cfg, Method::ERM) == doctest::Approx(0.900).epsilon(1e-12));
  CHECK(predicted_test_accuracy(cfg, Method::CUTOUT) ==
        doctest::Approx(0.975).epsilon(1e-12));
  CHECK(predicted_test_accuracy(cfg, Method::CUTMIX) == 1.0);
  CHECK(unlearned_tiers(Method::ERM) == std::vector<int>{1, 2});
  CHECK(unlearned_tiers(Method::CUTOUT) == std::vector<int>{2});
  CHECK(unlearned_tiers(Method::CUTMIX).empty());
}

TEST_CASE("accuracy report survives the JSON round trip") {
  AccuracyReport rep;
  rep.train_acc = 1.0;
  rep.aug_acc = 0.875;
  rep.test_acc = 0.9125;
  rep.ci_lo = 0.9;
  rep.ci_hi = 0.925;
  rep.tier_acc[0] = 0.99;
  rep.tier_acc[1] = 0.51;
  rep.tier_acc[2] = 0.47;
  rep.tier_n[0] = 1600;
  rep.tier_n[1] = 300;
  rep.tier_n[2] = 100;
  rep.n_test = 2000;
  rep.seed = 1234567890123ULL;
  const AccuracyReport back = accuracy_from_json(accuracy_json(rep));
  CHECK(back.train_acc == rep.train_acc);
  CHECK(back.aug_acc == rep.aug_acc);
  CHECK(back.test_acc == rep.test_acc);
  CHECK(back.ci_lo == rep.ci_lo);
  CHECK(back.ci_hi == rep.ci_hi);
  for (int t = 0; t < 3; ++t) {
    CHECK(back.tier_acc[t] == rep.tier_acc[t]);
    CHECK(back.tier_n[t] == rep.tier_n[t]);
  }
  CHECK(back.n_test == rep.n_test);
  CHECK(back.seed == rep.seed);

  rep.aug_acc.reset();
  CHECK_FALSE(accuracy_from_json(accuracy_json(rep)).aug_acc.has_value());

  const std::string csv = conditional_csv(rep);
  CHECK(csv.rfind("tier,draws,accuracy\n", 0) == 0);
  CHECK(csv.find("overall,2000,") != std::string::npos);
}

TEST_CASE("evaluation rejects nonsense arguments") {
  const Dataset ds = generate_dataset(tiny_config(17));
  const Weights W = zero_weights(20);
  CHECK_THROWS_AS(augmented_accuracy(W, ds, -1), std::invalid_argument);
  CHECK_THROWS_AS(augmented_accuracy(W, ds, 3), std::invalid_argument);
  CHECK_THROWS_AS(test_accuracy(W, ds.bank, ds.config, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(test_accuracy(W, ds.bank, ds.config, 10, 1, 0), std::invalid_argument);
}
