#include "patchlab/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "patchlab/activation.hpp"
#include "patchlab/cutmix_core.hpp"
#include "patchlab/eval.hpp"
#include "patchlab/logistic.hpp"
#include "patchlab/strfmt.hpp"

namespace patchlab {

void TrainConfig::validate(int P) const {
  if (!(eta > 0.0)) throw std::invalid_argument("step size must be positive");
  if (T < 0) throw std::invalid_argument("step count must be non-negative");
  if (log_every < 1) throw std::invalid_argument("log stride must be at least 1");
  if (threads < 1) throw std::invalid_argument("thread count must be at least 1");
  if (grad_tol < 0.0) throw std::invalid_argument("gradient tolerance must be non-negative");
  if (method == Method::CUTOUT && (C < 1 || 2 * C >= P))
    throw std::invalid_argument("cutout size must satisfy 1 <= C < P/2");
}

double smoothness_constant(const DataConfig& cfg, double r) {
  return 9.0 * cfg.P * cfg.sigma_d * cfg.sigma_d * cfg.d / r;
}

namespace {

struct Ctx {
  const Dataset* ds = nullptr;
  int n = 0, P = 0, d = 0;
  Eigen::MatrixXd Xall;  // d x nP, column i*P + p holds sample i's patch p
  std::vector<int> y;
  SubsetTable mix_sets;            // all 2^P subsets (mixing)
  std::vector<int> cutout_masks;   // bitmasks with popcount C
  double cutout_w = 0.0;
};

Ctx make_ctx(const Dataset& ds, Method method, int C) {
  Ctx c;
  c.ds = &ds;
  c.n = ds.n();
  c.P = ds.config.P;
  c.d = ds.config.d;
  c.Xall.resize(c.d, static_cast<Eigen::Index>(c.n) * c.P);
  c.y.resize(c.n);
  for (int i = 0; i < c.n; ++i) {
    c.y[i] = ds.samples[i].y;
    for (int p = 0; p < c.P; ++p)
      c.Xall.col(static_cast<Eigen::Index>(i) * c.P + p) = ds.samples[i].X.col(p);
  }
  if (method == Method::CUTMIX) {
    c.mix_sets = make_subset_table(c.P);
  } else if (method == Method::CUTOUT) {
    if (C < 0 || C >= c.P) throw std::invalid_argument("cutout size must satisfy 0 <= C < P");
    for (int mask = 0; mask < (1 << c.P); ++mask)
      if (__builtin_popcount(static_cast<unsigned>(mask)) == C) c.cutout_masks.push_back(mask);
    c.cutout_w = 1.0 / double(c.cutout_masks.size());
  }
  return c;
}

struct StepData {
  double loss = 0.0;
  Gradient grad;
  Eigen::MatrixXd drive;      // n x P
  Eigen::MatrixXd tp1, tm1;   // neuron-0 inner products, filled when m == 1
  double acc_train = 0.0;
  double acc_aug = 0.0;
};

StepData eval_step(const Ctx& c, const Weights& W, Method method, int threads,
                   bool want_recursion) {
  if (W.d() != c.d) throw std::invalid_argument("weight width does not match data dimension");
  const int n = c.n, P = c.P, m = W.m();
  const auto& act = W.act;

  Eigen::MatrixXd TP = W.w_plus * c.Xall;
  Eigen::MatrixXd TM = W.w_minus * c.Xall;

  Eigen::MatrixXd zmat(n, P);
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < P; ++p) {
      const Eigen::Index col = static_cast<Eigen::Index>(i) * P + p;
      double ap = 0.0, am = 0.0;
      for (int nu = 0; nu < m; ++nu) {
        ap += phi(TP(nu, col), act);
        am += phi(TM(nu, col), act);
      }
      zmat(i, p) = (ap - am) / m;
    }
  Eigen::VectorXd f = zmat.rowwise().sum();

  StepData sd;
  Eigen::MatrixXd D(n, P);
  int correct = 0;
  for (int i = 0; i < n; ++i)
    if (c.y[i] * f(i) > 0.0) ++correct;
  sd.acc_train = double(correct) / n;

  switch (method) {
    case Method::ERM: {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const double margin = c.y[i] * f(i);
        acc += logistic_loss(margin);
        const double g = -logistic_loss_prime(margin);
        for (int p = 0; p < P; ++p) D(i, p) = g;
      }
      sd.loss = acc / n;
      sd.acc_aug = sd.acc_train;
      break;
    }
    case Method::CUTOUT: {
      double acc = 0.0;
      long long aug_correct = 0;
      D.setZero();
      const int full = (1 << P) - 1;
      for (int i = 0; i < n; ++i) {
        for (int mask : c.cutout_masks) {
          double fm = f(i);
          for (int bits = mask; bits; bits &= bits - 1)
            fm -= zmat(i, __builtin_ctz(static_cast<unsigned>(bits)));
          const double margin = c.y[i] * fm;
          acc += logistic_loss(margin);
          if (margin > 0.0) ++aug_correct;
          const double g = -logistic_loss_prime(margin);
          for (int bits = full & ~mask; bits; bits &= bits - 1)
            D(i, __builtin_ctz(static_cast<unsigned>(bits))) += c.cutout_w * g;
        }
      }
      sd.loss = acc * c.cutout_w / n;
      sd.acc_aug = double(aug_correct) / (double(n) * double(c.cutout_masks.size()));
      break;
    }
    case Method::CUTMIX: {
      CutmixAccum acc = cutmix_accumulate(zmat, c.y, c.mix_sets, threads);
      sd.loss = acc.h_raw / (double(n) * n);
      D = acc.B / n;
      sd.acc_aug = sd.acc_train;
      break;
    }
  }

  // All three gradients assemble identically from r(i,p) = dLoss/dz_i^(p):
  // r = -(1/n) * y_i * D for the per-sample objectives, -(1/n) * D for mixing
  // (whose drive already carries the label weighting).
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(n) * P);
  for (int i = 0; i < n; ++i) {
    const double lab = (method == Method::CUTMIX) ? 1.0 : double(c.y[i]);
    for (int p = 0; p < P; ++p)
      r(static_cast<Eigen::Index>(i) * P + p) = -lab * D(i, p) / n;
  }
  Eigen::MatrixXd qp(m, static_cast<Eigen::Index>(n) * P);
  Eigen::MatrixXd qm(m, static_cast<Eigen::Index>(n) * P);
  for (Eigen::Index col = 0; col < qp.cols(); ++col)
    for (int nu = 0; nu < m; ++nu) {
      qp(nu, col) = r(col) * phi_prime(TP(nu, col), act) / m;
      qm(nu, col) = r(col) * phi_prime(TM(nu, col), act) / m;
    }
  sd.grad.plus = qp * c.Xall.transpose();
  sd.grad.minus = -(qm * c.Xall.transpose());

  if (want_recursion && m == 1) {
    sd.drive = D;
    sd.tp1.resize(n, P);
    sd.tm1.resize(n, P);
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < P; ++p) {
        const Eigen::Index col = static_cast<Eigen::Index>(i) * P + p;
        sd.tp1(i, p) = TP(0, col);
        sd.tm1(i, p) = TM(0, col);
      }
  }
  return sd;
}

struct CoeffMaxima {
  double gamma_self = 0.0, gamma_opp = 0.0, rho_self = 0.0, rho_opp = 0.0;
};

CoeffMaxima coeff_maxima(const CoeffTable& tab, const Dataset& ds) {
  CoeffMaxima mx;
  const int K = ds.config.K();
  for (int si = 0; si < 2; ++si)
    for (int k = 0; k < K; ++k) {
      mx.gamma_self = std::max(mx.gamma_self, tab.gamma[si](si, k));
      mx.gamma_opp = std::max(mx.gamma_opp, tab.gamma[si](1 - si, k));
    }
  for (int i = 0; i < ds.n(); ++i) {
    const auto& smp = ds.samples[i];
    const int yi = Dataset::sidx(smp.y);
    for (int p = 0; p < ds.config.P; ++p) {
      if (p == smp.p_star) continue;
      mx.rho_self = std::max(mx.rho_self, tab.rho[yi](i, p));
      mx.rho_opp = std::max(mx.rho_opp, tab.rho[1 - yi](i, p));
    }
  }
  return mx;
}

}  // namespace

std::pair<double, Gradient> erm_loss_and_grad(const Weights& W, const Dataset& ds) {
  Ctx c = make_ctx(ds, Method::ERM, 0);
  StepData sd = eval_step(c, W, Method::ERM, 1, false);
  return {sd.loss, std::move(sd.grad)};
}

std::pair<double, Gradient> cutout_loss_and_grad(const Weights& W, const Dataset& ds,
                                                 int C) {
  Ctx c = make_ctx(ds, Method::CUTOUT, C);
  StepData sd = eval_step(c, W, Method::CUTOUT, 1, false);
  return {sd.loss, std::move(sd.grad)};
}

std::pair<double, Gradient> cutmix_loss_and_grad(const Weights& W, const Dataset& ds,
                                                 int threads) {
  Ctx c = make_ctx(ds, Method::CUTMIX, 0);
  StepData sd = eval_step(c, W, Method::CUTMIX, threads, false);
  return {sd.loss, std::move(sd.grad)};
}

RunResult run_training(const Weights& W0, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate(ds.config.P);
  Ctx c = make_ctx(ds, cfg.method, cfg.C);

  RunResult out;
  out.W0 = W0;
  out.W = W0;
  const bool track = W0.m() == 1;
  CoeffRecursion rec(ds);
  const double Lsm = smoothness_constant(ds.config, W0.act.r);
  const bool descent_guard = cfg.method == Method::CUTMIX && cfg.eta <= 1.0 / Lsm;

  Weights last = W0;
  double prev_loss = 0.0;
  bool have_prev = false;
  int t = 0;
  for (t = 0;; ++t) {
    StepData sd = eval_step(c, out.W, cfg.method, cfg.threads, track);
    const double gn = std::sqrt(sd.grad.squared_norm());
    if (!std::isfinite(sd.loss) || !std::isfinite(gn)) {
      out.diverged = true;
      out.W = last;
      break;
    }
    if (descent_guard && have_prev && sd.loss > prev_loss + 1e-12) ++out.descent_violations;
    prev_loss = sd.loss;
    have_prev = true;

    const bool fired = cfg.grad_tol > 0.0 && gn <= cfg.grad_tol;
    const bool final_step = t == cfg.T || fired;
    if (t % cfg.log_every == 0 || final_step) {
      TraceRow row;
      row.t = t;
      row.loss = sd.loss;
      row.grad_norm = gn;
      row.feat_out = feature_output_trace(out.W, ds.bank);
      row.acc_train = sd.acc_train;
      row.acc_aug = sd.acc_aug;
      if (track) {
        const CoeffMaxima mx = coeff_maxima(rec.table(), ds);
        row.gamma_self_max = mx.gamma_self;
        row.gamma_opp_max = mx.gamma_opp;
        row.rho_self_max = mx.rho_self;
        row.rho_opp_max = mx.rho_opp;
        out.coeff_steps.emplace_back(t, rec.table());
      }
      out.trace.push_back(std::move(row));
    }
    if (final_step) {
      out.tol_fired = fired;
      break;
    }
    last = out.W;
    out.W.w_plus -= cfg.eta * sd.grad.plus;
    out.W.w_minus -= cfg.eta * sd.grad.minus;
    if (track) rec.step(cfg.method, cfg.eta, sd.drive, sd.tp1, sd.tm1, last);
  }
  out.steps_run = t;
  return out;
}

void write_trace_csv(const std::vector<TraceRow>& trace, int K, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open trace file: " + path);
  f << "t,loss,grad_norm";
  for (int k = 1; k <= K; ++k) f << ",out_pos_" << k;
  for (int k = 1; k <= K; ++k) f << ",out_neg_" << k;
  f << ",acc_train,acc_aug,gamma_self_max,gamma_opp_max,rho_self_max,rho_opp_max\n";
  for (const auto& row : trace) {
    if (static_cast<int>(row.feat_out.size()) != 2 * K)
      throw std::runtime_error("trace row has wrong feature readout width");
    f << fmt_int(row.t) << ',' << fmt_double(row.loss) << ',' << fmt_double(row.grad_norm);
    for (double v : row.feat_out) f << ',' << fmt_double(v);
    f << ',' << fmt_double(row.acc_train) << ',' << fmt_double(row.acc_aug) << ','
      << fmt_double(row.gamma_self_max) << ',' << fmt_double(row.gamma_opp_max) << ','
      << fmt_double(row.rho_self_max) << ',' << fmt_double(row.rho_opp_max) << '\n';
  }
  if (!f) throw std::runtime_error("failed writing trace file: " + path);
}

}  // namespace patchlab
