#include "patchlab/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "patchlab/rng.hpp"

namespace patchlab {

void DataConfig::validate() const {
  if (n < 1) throw std::invalid_argument("data: n must be at least 1");
  if (P < 2) throw std::invalid_argument("data: P must be at least 2");
  if (rho.empty()) throw std::invalid_argument("data: rho must be nonempty");
  if (d < 2 * K())
    throw std::invalid_argument("data: d must be at least 2K to host the feature bank");
  double sum = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (rho[i] <= 0.0) throw std::invalid_argument("data: rho entries must be positive");
    if (i > 0 && rho[i] > rho[i - 1] + 1e-15)
      throw std::invalid_argument("data: rho must be nonincreasing");
    sum += rho[i];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("data: rho must sum to 1 within 1e-12");
  if (tiers[0] + tiers[1] + tiers[2] != K())
    throw std::invalid_argument("data: tier counts must sum to K");
  if (tiers[0] < 0 || tiers[1] < 0 || tiers[2] < 0)
    throw std::invalid_argument("data: tier counts must be nonnegative");
  if (!(0.0 < sigma_b && sigma_b < sigma_d))
    throw std::invalid_argument("data: need 0 < sigma_b < sigma_d");
  if (!(0.0 < alpha && alpha < 1.0))
    throw std::invalid_argument("data: alpha must be in (0,1)");
}

Eigen::VectorXd sample_lambda_noise(const FeatureBank& bank, double sigma,
                                    std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  Eigen::VectorXd v(bank.d);
  for (int j = 0; j < bank.d; ++j) v[j] = normal(rng);
  v.head(2 * bank.K).setZero();
  return v;
}

namespace {

int pick_feature(const std::vector<double>& rho, double u) {
  // inverse CDF with half-open bins [cum_{k-1}, cum_k); the last bin absorbs
  // any accumulation shortfall
  double cum = 0.0;
  for (std::size_t k = 0; k + 1 < rho.size(); ++k) {
    cum += rho[k];
    if (u < cum) return static_cast<int>(k);
  }
  return static_cast<int>(rho.size()) - 1;
}

}  // namespace

Sample sample_point(const FeatureBank& bank, const DataConfig& cfg,
                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Sample s;
  s.y = unif(rng) < 0.5 ? 1 : -1;
  s.k = pick_feature(cfg.rho, unif(rng));
  s.p_star = static_cast<int>(unif(rng) * cfg.P);
  const int off = static_cast<int>(unif(rng) * (cfg.P - 1));
  s.p_tilde = off < s.p_star ? off : off + 1;
  s.fn_sign = unif(rng) < 0.5 ? 1 : -1;

  s.X.resize(bank.d, cfg.P);
  s.noise.resize(cfg.P);
  s.noise_sq.assign(cfg.P, 0.0);
  for (int p = 0; p < cfg.P; ++p) {
    if (p == s.p_star) {
      s.X.col(p) = bank.vec(s.y, s.k);
      continue;
    }
    const double sigma = (p == s.p_tilde) ? cfg.sigma_d : cfg.sigma_b;
    s.noise[p] = sample_lambda_noise(bank, sigma, rng);
    s.noise_sq[p] = s.noise[p].squaredNorm();
    s.X.col(p) = s.noise[p];
    if (p == s.p_tilde) s.X(bank.col(s.fn_sign, 0), p) += cfg.alpha;
  }
  return s;
}

Sample sample_test_point(const FeatureBank& bank, const DataConfig& cfg,
                         std::mt19937_64& rng) {
  return sample_point(bank, cfg, rng);
}

Dataset generate_dataset(const DataConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  ds.bank = FeatureBank{cfg.d, cfg.K()};
  ds.samples.reserve(cfg.n);
  for (int si = 0; si < 2; ++si)
    ds.Vsk[si].assign(cfg.K(), {});

  auto rng = make_engine(cfg.seed, 0);
  for (int i = 0; i < cfg.n; ++i) {
    ds.samples.push_back(sample_point(ds.bank, cfg, rng));
    const Sample& s = ds.samples.back();
    const int si = Dataset::sidx(s.y);
    ds.V[si].push_back(i);
    ds.Vsk[si][s.k].push_back(i);
    ds.F[Dataset::sidx(s.fn_sign)].push_back(i);
  }
  return ds;
}

namespace {

constexpr std::uint32_t kDatasetMagic = 0x504C4453;  // "PLDS"
constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("dataset file: truncated");
  return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset file: cannot open " + path + " for writing");
  const DataConfig& c = ds.config;
  put(f, kDatasetMagic);
  put(f, kDatasetVersion);
  put(f, static_cast<std::int32_t>(c.d));
  put(f, static_cast<std::int32_t>(c.n));
  put(f, static_cast<std::int32_t>(c.P));
  put(f, static_cast<std::int32_t>(c.K()));
  for (int t = 0; t < 3; ++t) put(f, static_cast<std::int32_t>(c.tiers[t]));
  put(f, c.sigma_d);
  put(f, c.sigma_b);
  put(f, c.alpha);
  put(f, c.seed);
  for (double r : c.rho) put(f, r);
  for (const Sample& s : ds.samples) {
    put(f, static_cast<std::int32_t>(s.y));
    put(f, static_cast<std::int32_t>(s.k));
    put(f, static_cast<std::int32_t>(s.p_star));
    put(f, static_cast<std::int32_t>(s.p_tilde));
    put(f, static_cast<std::int32_t>(s.fn_sign));
    f.write(reinterpret_cast<const char*>(s.X.data()),
            static_cast<std::streamsize>(sizeof(double)) * c.d * c.P);
  }
  if (!f) throw std::runtime_error("dataset file: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset file: cannot open " + path);
  if (get<std::uint32_t>(f) != kDatasetMagic)
    throw std::runtime_error("dataset file: bad magic in " + path);
  if (get<std::uint32_t>(f) != kDatasetVersion)
    throw std::runtime_error("dataset file: unsupported version in " + path);
  DataConfig c;
  c.d = get<std::int32_t>(f);
  c.n = get<std::int32_t>(f);
  c.P = get<std::int32_t>(f);
  const int K = get<std::int32_t>(f);
  for (int t = 0; t < 3; ++t) c.tiers[t] = get<std::int32_t>(f);
  c.sigma_d = get<double>(f);
  c.sigma_b = get<double>(f);
  c.alpha = get<double>(f);
  c.seed = get<std::uint64_t>(f);
  c.rho.resize(K);
  for (int k = 0; k < K; ++k) c.rho[k] = get<double>(f);
  c.validate();

  Dataset ds;
  ds.config = c;
  ds.bank = FeatureBank{c.d, K};
  for (int si = 0; si < 2; ++si) ds.Vsk[si].assign(K, {});
  ds.samples.resize(c.n);
  for (int i = 0; i < c.n; ++i) {
    Sample& s = ds.samples[i];
    s.y = get<std::int32_t>(f);
    s.k = get<std::int32_t>(f);
    s.p_star = get<std::int32_t>(f);
    s.p_tilde = get<std::int32_t>(f);
    s.fn_sign = get<std::int32_t>(f);
    s.X.resize(c.d, c.P);
    f.read(reinterpret_cast<char*>(s.X.data()),
           static_cast<std::streamsize>(sizeof(double)) * c.d * c.P);
    if (!f) throw std::runtime_error("dataset file: truncated sample block");
    // noise coordinates on the feature axes are exactly zero by construction,
    // so stripping the alpha term recovers the raw noise exactly
    s.noise.resize(c.P);
    s.noise_sq.assign(c.P, 0.0);
    for (int p = 0; p < c.P; ++p) {
      if (p == s.p_star) continue;
      s.noise[p] = s.X.col(p);
      if (p == s.p_tilde) s.noise[p][ds.bank.col(s.fn_sign, 0)] -= c.alpha;
      s.noise_sq[p] = s.noise[p].squaredNorm();
    }
    const int si = Dataset::sidx(s.y);
    ds.V[si].push_back(i);
    ds.Vsk[si][s.k].push_back(i);
    ds.F[Dataset::sidx(s.fn_sign)].push_back(i);
  }
  return ds;
}

}  // namespace patchlab
