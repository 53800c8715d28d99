#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "patchlab/cutmix_core.hpp"
#include "patchlab/logistic.hpp"
#include "patchlab/train.hpp"

#include "common.hpp"

using namespace patchlab;
using namespace patchlab::testutil;

namespace {

double loss_of(Method method, const Weights& W, const Dataset& ds, int C) {
  switch (method) {
    case Method::ERM: return erm_loss_and_grad(W, ds).first;
    case Method::CUTOUT: return cutout_loss_and_grad(W, ds, C).first;
    case Method::CUTMIX: return cutmix_loss_and_grad(W, ds).first;
  }
  return 0.0;
}

Gradient grad_of(Method method, const Weights& W, const Dataset& ds, int C) {
  switch (method) {
    case Method::ERM: return erm_loss_and_grad(W, ds).second;
    case Method::CUTOUT: return cutout_loss_and_grad(W, ds, C).second;
    case Method::CUTMIX: return cutmix_loss_and_grad(W, ds).second;
  }
  return {};
}

// Reference path for the mixing objective: assemble every mixed patch matrix
// explicitly and differentiate the per-term loss directly.
std::pair<double, Gradient> naive_cutmix(const Weights& W, const Dataset& ds) {
  const int n = ds.n(), P = ds.config.P, d = ds.config.d, m = W.m();
  const SubsetTable st = make_subset_table(P);
  double loss = 0.0;
  Gradient g;
  g.plus = Eigen::MatrixXd::Zero(m, d);
  g.minus = Eigen::MatrixXd::Zero(m, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int mask = 0; mask < (1 << P); ++mask) {
        Eigen::MatrixXd Xm(d, P);
        for (int p = 0; p < P; ++p)
          Xm.col(p) = ((mask >> p) & 1) ? ds.samples[i].X.col(p) : ds.samples[j].X.col(p);
        const double f = forward(W, Xm);
        const double lam = st.lam[mask], w = st.weight[mask];
        const int yi = ds.samples[i].y, yj = ds.samples[j].y;
        loss += w * (lam * logistic_loss(yi * f) + (1.0 - lam) * logistic_loss(yj * f));
        const double coef = w * (lam * yi * logistic_loss_prime(yi * f) +
                                 (1.0 - lam) * yj * logistic_loss_prime(yj * f));
        for (int nu = 0; nu < m; ++nu)
          for (int p = 0; p < P; ++p) {
            const auto x = Xm.col(p);
            g.plus.row(nu) +=
                coef / m * phi_prime(W.w_plus.row(nu).dot(x), W.act) * x.transpose();
            g.minus.row(nu) -=
                coef / m * phi_prime(W.w_minus.row(nu).dot(x), W.act) * x.transpose();
          }
      }
  const double n2 = double(n) * n;
  loss /= n2;
  g.plus /= n2;
  g.minus /= n2;
  return {loss, g};
}

}  // namespace

TEST_CASE("zero weights give the chance-level loss for every trainer") {
  const Dataset ds = generate_dataset(tiny_config(11));
  const Weights W = zero_weights(ds.config.d);
  CHECK(std::abs(erm_loss_and_grad(W, ds).first - std::log(2.0)) <= 1e-14);
  CHECK(std::abs(cutout_loss_and_grad(W, ds, 1).first - std::log(2.0)) <= 1e-14);
  CHECK(std::abs(cutmix_loss_and_grad(W, ds).first - std::log(2.0)) <= 1e-14);
}

TEST_CASE("analytic gradients match central differences for every trainer") {
  const double hstep = 1e-6;
  for (std::uint64_t seed : {21u, 22u, 23u, 24u}) {
    const Dataset ds = generate_dataset(tiny_config(seed));
    const int m = seed % 2 == 0 ? 2 : 1;
    Weights W = random_weights(ds.config.d, m, seed, 0.35);
    for (Method method : {Method::ERM, Method::CUTOUT, Method::CUTMIX}) {
      const Gradient g = grad_of(method, W, ds, 1);
      double worst = 0.0, scale = 0.0;
      for (int blk = 0; blk < 2; ++blk) {
        Eigen::MatrixXd& Wb = blk == 0 ? W.w_plus : W.w_minus;
        const Eigen::MatrixXd& gb = blk == 0 ? g.plus : g.minus;
        scale = std::max(scale, gb.cwiseAbs().maxCoeff());
        for (int nu = 0; nu < m; ++nu)
          for (int j = 0; j < ds.config.d; ++j) {
            const double keep = Wb(nu, j);
            Wb(nu, j) = keep + hstep;
            const double up = loss_of(method, W, ds, 1);
            Wb(nu, j) = keep - hstep;
            const double dn = loss_of(method, W, ds, 1);
            Wb(nu, j) = keep;
            worst = std::max(worst, std::abs((up - dn) / (2 * hstep) - gb(nu, j)));
          }
      }
      CHECK(worst <= 1e-5 * std::max(scale, 1e-3));
    }
  }
}

TEST_CASE("cutting zero patches reduces to the plain trainer") {
  const Dataset ds = generate_dataset(tiny_config(31));
  const Weights W = random_weights(ds.config.d, 1, 31, 0.3);
  const auto [le, ge] = erm_loss_and_grad(W, ds);
  const auto [lc, gc] = cutout_loss_and_grad(W, ds, 0);
  CHECK(std::abs(le - lc) <= 1e-14);
  CHECK((ge.plus - gc.plus).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((ge.minus - gc.minus).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("cutout loss averages the masked forward passes") {
  const Dataset ds = generate_dataset(tiny_config(32));
  const Weights W = random_weights(ds.config.d, 1, 32, 0.3);
  const int P = ds.config.P;
  double ref = 0.0;
  for (const auto& smp : ds.samples)
    for (int p = 0; p < P; ++p) {
      Eigen::MatrixXd Xm = smp.X;
      Xm.col(p).setZero();
      ref += logistic_loss(smp.y * forward(W, Xm));
    }
  ref /= double(ds.n()) * P;
  CHECK(std::abs(cutout_loss_and_grad(W, ds, 1).first - ref) <= 1e-12);
}

TEST_CASE("mixing trainer matches the explicit pair-and-subset oracle") {
  for (std::uint64_t seed : {41u, 42u}) {
    DataConfig cfg = tiny_config(seed, seed == 41u ? 8 : 6, seed == 41u ? 4 : 2);
    if (seed == 42u) {
      cfg.P = 2;  // no background patches
      cfg.rho = {0.7, 0.3};
      cfg.tiers[0] = 1;
      cfg.tiers[1] = 1;
      cfg.tiers[2] = 0;
    }
    const Dataset ds = generate_dataset(cfg);
    const Weights W = random_weights(cfg.d, 1, seed, 0.4);
    const auto [loss, grad] = cutmix_loss_and_grad(W, ds);
    const auto [nloss, ngrad] = naive_cutmix(W, ds);
    CHECK(std::abs(loss - nloss) <= 1e-12);
    const double scale = std::max(1.0, ngrad.plus.cwiseAbs().maxCoeff());
    CHECK((grad.plus - ngrad.plus).cwiseAbs().maxCoeff() <= 1e-10 * scale);
    CHECK((grad.minus - ngrad.minus).cwiseAbs().maxCoeff() <= 1e-10 * scale);
  }
}

TEST_CASE("subset weights form the stated mixture law") {
  const SubsetTable st = make_subset_table(3);
  double total = 0.0;
  for (double w : st.weight) total += w;
  CHECK(std::abs(total - 1.0) <= 1e-15);
  CHECK(st.weight[0] == doctest::Approx(0.25).epsilon(1e-15));   // empty set
  CHECK(st.weight[7] == doctest::Approx(0.25).epsilon(1e-15));   // full set
  for (int mask : {1, 2, 4})
    CHECK(st.weight[mask] == doctest::Approx(1.0 / 12).epsilon(1e-15));
  CHECK(st.lam[5] == doctest::Approx(2.0 / 3).epsilon(1e-15));
}

TEST_CASE("threaded mixing accumulation reproduces the serial result") {
  DataConfig cfg = tiny_config(51, 30, 40);
  const Dataset ds = generate_dataset(cfg);
  const Weights W = random_weights(cfg.d, 1, 51, 0.3);
  const auto [l1, g1] = cutmix_loss_and_grad(W, ds, 1);
  const auto [l3, g3] = cutmix_loss_and_grad(W, ds, 3);
  CHECK(std::abs(l1 - l3) <= 1e-12);
  CHECK((g1.plus - g3.plus).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((g1.minus - g3.minus).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::MatrixXd zmat(ds.n(), cfg.P);
  std::vector<int> y(ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    y[i] = ds.samples[i].y;
    for (int p = 0; p < cfg.P; ++p) zmat(i, p) = 0.1 * i - 0.2 * p;
  }
  const SubsetTable st = make_subset_table(cfg.P);
  const CutmixAccum a = cutmix_accumulate(zmat, y, st, 1);
  const CutmixAccum b = cutmix_accumulate(zmat, y, st, 4);
  CHECK(a.h_raw == b.h_raw);
  CHECK((a.B - b.B).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training trace visits the requested steps") {
  const Dataset ds = generate_dataset(tiny_config(61));
  const Weights W0 = init_weights(ds.config.d, 1, {1e-4, 5}, {});
  TrainConfig tc;
  tc.method = Method::ERM;
  tc.eta = 0.5;
  tc.T = 7;
  tc.log_every = 3;
  const RunResult rr = run_training(W0, ds, tc);
  REQUIRE(rr.trace.size() == 4);
  CHECK(rr.trace[0].t == 0);
  CHECK(rr.trace[1].t == 3);
  CHECK(rr.trace[2].t == 6);
  CHECK(rr.trace[3].t == 7);
  CHECK(rr.steps_run == 7);
  CHECK_FALSE(rr.diverged);
  REQUIRE(rr.coeff_steps.size() == rr.trace.size());
  for (size_t q = 0; q < rr.trace.size(); ++q)
    CHECK(rr.coeff_steps[q].first == rr.trace[q].t);
  for (const auto& row : rr.trace) {
    CHECK(std::isfinite(row.loss));
    CHECK(row.acc_train >= 0.0);
    CHECK(row.acc_train <= 1.0);
    CHECK(static_cast<int>(row.feat_out.size()) == 2 * ds.config.K());
  }
}

TEST_CASE("a zero-step run logs the starting point and keeps the weights") {
  const Dataset ds = generate_dataset(tiny_config(62));
  const Weights W0 = init_weights(ds.config.d, 1, {1e-4, 6}, {});
  TrainConfig tc;
  tc.T = 0;
  const RunResult rr = run_training(W0, ds, tc);
  REQUIRE(rr.trace.size() == 1);
  CHECK(rr.trace[0].t == 0);
  CHECK((rr.W.w_plus - W0.w_plus).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rr.W.w_minus - W0.w_minus).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the gradient tolerance stops a converged run early") {
  const Dataset ds = generate_dataset(tiny_config(63));
  const Weights W0 = init_weights(ds.config.d, 1, {1e-4, 7}, {});
  TrainConfig tc;
  tc.method = Method::ERM;
  tc.eta = 0.5;
  tc.T = 100000;
  tc.log_every = 50;
  tc.grad_tol = 1e-3;
  const RunResult rr = run_training(W0, ds, tc);
  CHECK(rr.tol_fired);
  CHECK(rr.steps_run < tc.T);
  CHECK(rr.trace.back().grad_norm <= tc.grad_tol);
}

TEST_CASE("one step from fresh weights grows the top feature readout") {
  const Dataset ds = generate_dataset(tiny_config(64, 40, 12));
  const Weights W0 = init_weights(ds.config.d, 1, {1e-4, 8}, {});
  for (Method method : {Method::ERM, Method::CUTOUT, Method::CUTMIX}) {
    TrainConfig tc;
    tc.method = method;
    tc.C = 1;
    tc.eta = 1.0;
    tc.T = 1;
    const RunResult rr = run_training(W0, ds, tc);
    REQUIRE(rr.trace.size() == 2);
    CHECK(rr.trace[1].feat_out[0] > rr.trace[0].feat_out[0]);
  }
}

TEST_CASE("consistent patch relabeling leaves every objective unchanged") {
  const Dataset base = generate_dataset(tiny_config(65));
  const int P = base.config.P;
  Dataset perm = base;
  const auto dst = [&](int p) { return (p + 1) % P; };
  for (auto& smp : perm.samples) {
    const Sample keep = smp;
    for (int p = 0; p < P; ++p) {
      smp.X.col(dst(p)) = keep.X.col(p);
      smp.noise[dst(p)] = keep.noise[p];
      smp.noise_sq[dst(p)] = keep.noise_sq[p];
    }
    smp.p_star = dst(keep.p_star);
    smp.p_tilde = dst(keep.p_tilde);
  }
  const Weights W = random_weights(base.config.d, 1, 65, 0.3);
  CHECK(std::abs(erm_loss_and_grad(W, base).first - erm_loss_and_grad(W, perm).first) <= 1e-13);
  CHECK(std::abs(cutout_loss_and_grad(W, base, 1).first -
                 cutout_loss_and_grad(W, perm, 1).first) <= 1e-13);
  CHECK(std::abs(cutmix_loss_and_grad(W, base).first -
                 cutmix_loss_and_grad(W, perm).first) <= 1e-13);
}

TEST_CASE("descent makes progress on the plain objective") {
  const Dataset ds = generate_dataset(tiny_config(66));
  const Weights W0 = init_weights(ds.config.d, 1, {1e-4, 9}, {});
  TrainConfig tc;
  tc.method = Method::ERM;
  tc.eta = 0.5;
  tc.T = 40;
  const RunResult rr = run_training(W0, ds, tc);
  CHECK(rr.trace.back().loss < rr.trace.front().loss);
  CHECK(rr.trace.back().acc_train == 1.0);
}

TEST_CASE("invalid training settings are rejected") {
  TrainConfig tc;
  tc.eta = 0.0;
  CHECK_THROWS_AS(tc.validate(3), std::invalid_argument);
  tc = {};
  tc.method = Method::CUTOUT;
  tc.C = 2;  // 2C >= P
  CHECK_THROWS_AS(tc.validate(3), std::invalid_argument);
  tc.C = 1;
  CHECK_NOTHROW(tc.validate(3));
  tc = {};
  tc.log_every = 0;
  CHECK_THROWS_AS(tc.validate(3), std::invalid_argument);
}

TEST_CASE("trace files are byte-stable") {
  const Dataset ds = generate_dataset(tiny_config(67));
  const Weights W0 = init_weights(ds.config.d, 1, {1e-4, 10}, {});
  TrainConfig tc;
  tc.method = Method::CUTOUT;
  tc.C = 1;
  tc.eta = 0.5;
  tc.T = 6;
  tc.log_every = 2;
  const RunResult rr = run_training(W0, ds, tc);
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "patchlab_trace_test";
  fs::create_directories(dir);
  const auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
  };
  write_trace_csv(rr.trace, ds.config.K(), (dir / "a.csv").string());
  write_trace_csv(rr.trace, ds.config.K(), (dir / "b.csv").string());
  const std::string a = slurp(dir / "a.csv");
  CHECK(a == slurp(dir / "b.csv"));
  CHECK(a.rfind("t,loss,grad_norm,out_pos_1,out_pos_2,out_pos_3,out_neg_1,", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("the step-size guard constant has the right scale") {
  CHECK(smoothness_constant(desk_config(1), 1.0) == doctest::Approx(3375.0).epsilon(1e-12));
}
