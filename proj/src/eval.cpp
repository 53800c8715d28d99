#include "patchlab/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "patchlab/activation.hpp"
#include "patchlab/rng.hpp"
#include "patchlab/strfmt.hpp"

namespace patchlab {

namespace {

// Stream id separating test draws from the dataset streams of the same seed.
constexpr std::uint64_t kTestStream = 0x7E57D0A1ULL;

const char* tier_name(int t) {
  static const char* names[3] = {"common", "rare", "extreme"};
  return names[t];
}

}  // namespace

double train_accuracy(const Weights& W, const Dataset& ds) {
  if (ds.n() == 0) throw std::invalid_argument("dataset is empty");
  long correct = 0;
  for (const Sample& smp : ds.samples)
    if (smp.y * forward(W, smp.X) > 0.0) ++correct;
  return double(correct) / double(ds.n());
}

double augmented_accuracy(const Weights& W, const Dataset& ds, int C) {
  const int P = ds.config.P;
  if (C < 0 || C >= P) throw std::invalid_argument("mask size must be in [0, P)");
  if (ds.n() == 0) throw std::invalid_argument("dataset is empty");
  long correct = 0, total = 0;
  for (unsigned mask = 0; mask < (1u << P); ++mask) {
    if (std::popcount(mask) != C) continue;
    for (const Sample& smp : ds.samples) {
      Eigen::MatrixXd Xm = smp.X;
      for (int p = 0; p < P; ++p)
        if (mask >> p & 1u) Xm.col(p).setZero();
      if (smp.y * forward(W, Xm) > 0.0) ++correct;
      ++total;
    }
  }
  return double(correct) / double(total);
}

AccuracyReport test_accuracy(const Weights& W, const FeatureBank& bank,
                             const DataConfig& cfg, long n_test,
                             std::uint64_t seed, int threads) {
  if (n_test <= 0) throw std::invalid_argument("n_test must be positive");
  if (threads < 1) throw std::invalid_argument("thread count must be positive");
  const std::uint64_t sub = derive_seed(seed, kTestStream);

  struct Tally {
    long correct[3] = {0, 0, 0};
    long total[3] = {0, 0, 0};
  };
  const int nthreads = int(std::min<long>(threads, n_test));
  std::vector<Tally> tallies(nthreads);
  auto run_range = [&](int tid) {
    const long lo = n_test * tid / nthreads;
    const long hi = n_test * (tid + 1) / nthreads;
    Tally& tl = tallies[tid];
    for (long j = lo; j < hi; ++j) {
      std::mt19937_64 eng = make_engine(sub, std::uint64_t(j));
      const Sample smp = sample_test_point(bank, cfg, eng);
      const int tier = cfg.tier_of(smp.k);
      ++tl.total[tier];
      if (smp.y * forward(W, smp.X) > 0.0) ++tl.correct[tier];
    }
  };
  if (nthreads == 1) {
    run_range(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int tid = 0; tid < nthreads; ++tid) pool.emplace_back(run_range, tid);
    for (std::thread& th : pool) th.join();
  }

  AccuracyReport rep;
  rep.n_test = n_test;
  rep.seed = seed;
  long correct = 0;
  for (int t = 0; t < 3; ++t) {
    long c = 0, tot = 0;
    for (const Tally& tl : tallies) {
      c += tl.correct[t];
      tot += tl.total[t];
    }
    rep.tier_n[t] = tot;
    rep.tier_acc[t] =
        tot > 0 ? double(c) / double(tot) : std::numeric_limits<double>::quiet_NaN();
    correct += c;
  }
  rep.test_acc = double(correct) / double(n_test);
  const auto ci = wilson_interval(correct, n_test);
  rep.ci_lo = ci.first;
  rep.ci_hi = ci.second;
  return rep;
}

std::pair<double, double> wilson_interval(long k, long n) {
  if (n <= 0 || k < 0 || k > n) throw std::invalid_argument("need 0 <= k <= n, n > 0");
  const double z = 1.959963984540054;  // 97.5% normal quantile
  const double nn = double(n);
  const double p = double(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  // at the boundaries center == half exactly, modulo rounding
  const double lo = k == 0 ? 0.0 : std::max(0.0, center - half);
  const double hi = k == n ? 1.0 : std::min(1.0, center + half);
  return {lo, hi};
}

std::vector<double> feature_output_trace(const Weights& W, const FeatureBank& bank) {
  const int m = W.m();
  std::vector<double> out(2 * bank.K, 0.0);
  for (int si = 0; si < 2; ++si) {
    const int s = si == 0 ? 1 : -1;
    for (int k = 0; k < bank.K; ++k) {
      const int col = bank.col(s, k);
      double gap = 0.0;
      for (int nu = 0; nu < m; ++nu)
        gap += phi(W.w_plus(nu, col), W.act) - phi(W.w_minus(nu, col), W.act);
      out[si * bank.K + k] = gap / m;
    }
  }
  return out;
}

double predicted_test_accuracy(const DataConfig& cfg, Method method) {
  const std::vector<int> missed = unlearned_tiers(method);
  double miss_mass = 0.0;
  for (int k = 0; k < cfg.K(); ++k) {
    const int tier = cfg.tier_of(k);
    if (std::find(missed.begin(), missed.end(), tier) != missed.end())
      miss_mass += cfg.rho[size_t(k)];
  }
  return 1.0 - 0.5 * miss_mass;
}

std::vector<int> unlearned_tiers(Method method) {
  switch (method) {
    case Method::ERM:
      return {1, 2};
    case Method::CUTOUT:
      return {2};
    case Method::CUTMIX:
      return {};
  }
  throw std::logic_error("unreachable trainer tag");
}

std::string accuracy_json(const AccuracyReport& rep) {
  nlohmann::ordered_json j;
  j["train_acc"] = rep.train_acc;
  if (rep.aug_acc)
    j["aug_acc"] = *rep.aug_acc;
  else
    j["aug_acc"] = nullptr;
  j["test_acc"] = rep.test_acc;
  j["ci95"] = {rep.ci_lo, rep.ci_hi};
  j["n_test"] = rep.n_test;
  j["seed"] = rep.seed;
  nlohmann::ordered_json tiers;
  for (int t = 0; t < 3; ++t) {
    nlohmann::ordered_json row;
    row["n"] = rep.tier_n[t];
    if (rep.tier_n[t] > 0)
      row["acc"] = rep.tier_acc[t];
    else
      row["acc"] = nullptr;
    tiers[tier_name(t)] = row;
  }
  j["tiers"] = tiers;
  return j.dump(2) + "\n";
}

AccuracyReport accuracy_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  AccuracyReport rep;
  rep.train_acc = j.at("train_acc").get<double>();
  if (!j.at("aug_acc").is_null()) rep.aug_acc = j.at("aug_acc").get<double>();
  rep.test_acc = j.at("test_acc").get<double>();
  rep.ci_lo = j.at("ci95").at(0).get<double>();
  rep.ci_hi = j.at("ci95").at(1).get<double>();
  rep.n_test = j.at("n_test").get<long>();
  rep.seed = j.at("seed").get<std::uint64_t>();
  for (int t = 0; t < 3; ++t) {
    const nlohmann::json& row = j.at("tiers").at(tier_name(t));
    rep.tier_n[t] = row.at("n").get<long>();
    rep.tier_acc[t] = row.at("acc").is_null()
                          ? std::numeric_limits<double>::quiet_NaN()
                          : row.at("acc").get<double>();
  }
  return rep;
}

std::string conditional_csv(const AccuracyReport& rep) {
  std::string out = "tier,draws,accuracy\n";
  for (int t = 0; t < 3; ++t) {
    out += tier_name(t);
    out += ',';
    out += fmt_int(rep.tier_n[t]);
    out += ',';
    out += rep.tier_n[t] > 0 ? fmt_double(rep.tier_acc[t]) : std::string("nan");
    out += '\n';
  }
  out += "overall,";
  out += fmt_int(rep.n_test);
  out += ',';
  out += fmt_double(rep.test_acc);
  out += '\n';
  return out;
}

}  // namespace patchlab
