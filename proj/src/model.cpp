#include "patchlab/model.hpp"

#include <fstream>
#include <random>
#include <stdexcept>

#include "patchlab/logistic.hpp"
#include "patchlab/rng.hpp"

namespace patchlab {

namespace {

void check_shapes(const Weights& W, const Eigen::MatrixXd& X) {
  if (W.w_plus.rows() != W.w_minus.rows() || W.w_plus.cols() != W.w_minus.cols())
    throw std::invalid_argument("model: weight blocks disagree in shape");
  if (X.rows() != W.w_plus.cols())
    throw std::invalid_argument("model: patch dimension does not match weights");
}

}  // namespace

double forward(const Weights& W, const Eigen::MatrixXd& X) {
  check_shapes(W, X);
  const int m = W.m();
  const Eigen::MatrixXd tp = W.w_plus * X;   // m x P
  const Eigen::MatrixXd tm = W.w_minus * X;  // m x P
  double acc = 0.0;
  for (int nu = 0; nu < m; ++nu)
    for (int p = 0; p < X.cols(); ++p)
      acc += phi(tp(nu, p), W.act) - phi(tm(nu, p), W.act);
  return acc / m;
}

Gradient grad_sample(const Weights& W, const Eigen::MatrixXd& X, int y) {
  check_shapes(W, X);
  const int m = W.m();
  const int P = static_cast<int>(X.cols());
  const Eigen::MatrixXd tp = W.w_plus * X;
  const Eigen::MatrixXd tm = W.w_minus * X;
  const double lp = logistic_loss_prime(y * forward(W, X));

  Gradient g{Eigen::MatrixXd::Zero(m, W.d()), Eigen::MatrixXd::Zero(m, W.d())};
  for (int nu = 0; nu < m; ++nu) {
    for (int p = 0; p < P; ++p) {
      const double cp = lp * y / m * phi_prime(tp(nu, p), W.act);
      const double cm = -lp * y / m * phi_prime(tm(nu, p), W.act);
      g.plus.row(nu) += cp * X.col(p).transpose();
      g.minus.row(nu) += cm * X.col(p).transpose();
    }
  }
  return g;
}

Weights init_weights(int d, int m, const InitConfig& init, const ActivationParams& act) {
  if (init.sigma0 <= 0.0) throw std::invalid_argument("model: sigma0 must be positive");
  if (d < 1 || m < 1) throw std::invalid_argument("model: d and m must be positive");
  auto rng = make_engine(init.seed, 1);
  std::normal_distribution<double> normal(0.0, init.sigma0);
  Weights W;
  W.act = act;
  W.w_plus.resize(m, d);
  W.w_minus.resize(m, d);
  // fill order: all of w_plus row-major, then all of w_minus
  for (int nu = 0; nu < m; ++nu)
    for (int j = 0; j < d; ++j) W.w_plus(nu, j) = normal(rng);
  for (int nu = 0; nu < m; ++nu)
    for (int j = 0; j < d; ++j) W.w_minus(nu, j) = normal(rng);
  return W;
}

namespace {

constexpr std::uint32_t kWeightsMagic = 0x504C5754;  // "PLWT"
constexpr std::uint32_t kWeightsVersion = 1;

void put_block(std::ofstream& f, const Eigen::MatrixXd& M) {
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j) {
      const double v = M(i, j);
      f.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
}

void get_block(std::ifstream& f, Eigen::MatrixXd& M) {
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j) {
      double v;
      f.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!f) throw std::runtime_error("weights file: truncated");
      M(i, j) = v;
    }
}

}  // namespace

void save_weights(const std::string& path, const Weights& W, const Weights& W0,
                  const InitConfig& init) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("weights file: cannot open " + path + " for writing");
  auto put = [&f](auto v) { f.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  put(kWeightsMagic);
  put(kWeightsVersion);
  put(static_cast<std::int32_t>(W.d()));
  put(static_cast<std::int32_t>(W.m()));
  put(W.act.beta);
  put(W.act.r);
  put(init.sigma0);
  put(init.seed);
  put_block(f, W.w_plus);
  put_block(f, W.w_minus);
  put_block(f, W0.w_plus);
  put_block(f, W0.w_minus);
  if (!f) throw std::runtime_error("weights file: write failed for " + path);
}

WeightsFile load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("weights file: cannot open " + path);
  auto get = [&f](auto& v) {
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!f) throw std::runtime_error("weights file: truncated header");
  };
  std::uint32_t magic, version;
  get(magic);
  get(version);
  if (magic != kWeightsMagic) throw std::runtime_error("weights file: bad magic in " + path);
  if (version != kWeightsVersion)
    throw std::runtime_error("weights file: unsupported version in " + path);
  std::int32_t d, m;
  get(d);
  get(m);
  WeightsFile out;
  get(out.W.act.beta);
  get(out.W.act.r);
  get(out.init.sigma0);
  get(out.init.seed);
  out.W0.act = out.W.act;
  out.W.w_plus.resize(m, d);
  out.W.w_minus.resize(m, d);
  out.W0.w_plus.resize(m, d);
  out.W0.w_minus.resize(m, d);
  get_block(f, out.W.w_plus);
  get_block(f, out.W.w_minus);
  get_block(f, out.W0.w_plus);
  get_block(f, out.W0.w_minus);
  return out;
}

}  // namespace patchlab
