#include "patchlab/theory.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "patchlab/activation.hpp"
#include "patchlab/cutmix_core.hpp"
#include "patchlab/logistic.hpp"

namespace patchlab {

namespace {

int slot_of(const SlotIndex& idx, const Dataset& ds, int i, int p) {
  const auto& smp = ds.samples[i];
  return p == smp.p_star ? idx.feat(smp.y, smp.k) : idx.patch(i, p);
}

std::vector<int> labels_of(const Dataset& ds) {
  std::vector<int> y(ds.n());
  for (int i = 0; i < ds.n(); ++i) y[i] = ds.samples[i].y;
  return y;
}

}  // namespace

Eigen::VectorXd compute_z(const Weights& W, const Dataset& ds) {
  if (W.d() != ds.config.d) throw std::invalid_argument("weight width does not match data");
  const SlotIndex idx = make_slot_index(ds);
  const int m = W.m();
  Eigen::VectorXd Z(idx.dim());
  for (int si = 0; si < 2; ++si) {
    const int s = si == 0 ? 1 : -1;
    for (int k = 0; k < idx.K; ++k) {
      const int col = ds.bank.col(s, k);
      double ap = 0.0, am = 0.0;
      for (int nu = 0; nu < m; ++nu) {
        ap += phi(W.w_plus(nu, col), W.act);
        am += phi(W.w_minus(nu, col), W.act);
      }
      Z(idx.feat(s, k)) = (ap - am) / m;
    }
  }
  for (int i = 0; i < idx.n; ++i) {
    const auto& smp = ds.samples[i];
    for (int p = 0; p < idx.P; ++p) {
      if (p == smp.p_star) continue;
      double ap = 0.0, am = 0.0;
      for (int nu = 0; nu < m; ++nu) {
        ap += phi(W.w_plus.row(nu).dot(smp.X.col(p)), W.act);
        am += phi(W.w_minus.row(nu).dot(smp.X.col(p)), W.act);
      }
      Z(idx.patch(i, p)) = (ap - am) / m;
    }
  }
  return Z;
}

Eigen::MatrixXd expand_z(const Dataset& ds, const Eigen::VectorXd& Z) {
  const SlotIndex idx = make_slot_index(ds);
  if (Z.size() != idx.dim()) throw std::invalid_argument("contribution vector has wrong size");
  Eigen::MatrixXd zmat(idx.n, idx.P);
  for (int i = 0; i < idx.n; ++i)
    for (int p = 0; p < idx.P; ++p) zmat(i, p) = Z(slot_of(idx, ds, i, p));
  return zmat;
}

double h_value(const Dataset& ds, const Eigen::VectorXd& Z, int threads) {
  const Eigen::MatrixXd zmat = expand_z(ds, Z);
  const CutmixAccum acc =
      cutmix_accumulate(zmat, labels_of(ds), make_subset_table(ds.config.P), threads);
  const double n = ds.n();
  return acc.h_raw / (n * n);
}

Eigen::VectorXd h_grad(const Dataset& ds, const Eigen::VectorXd& Z, int threads) {
  const SlotIndex idx = make_slot_index(ds);
  const Eigen::MatrixXd zmat = expand_z(ds, Z);
  const CutmixAccum acc =
      cutmix_accumulate(zmat, labels_of(ds), make_subset_table(ds.config.P), threads);
  const double n = ds.n();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(idx.dim());
  for (int i = 0; i < idx.n; ++i)
    for (int p = 0; p < idx.P; ++p)
      g(slot_of(idx, ds, i, p)) += -acc.B(i, p) / (n * n);
  return g;
}

Eigen::MatrixXd h_hessian(const Dataset& ds, const Eigen::VectorXd& Z) {
  const SlotIndex idx = make_slot_index(ds);
  if (idx.dim() > 200)
    throw std::invalid_argument("hessian enumeration is gated to dim(Z) <= 200");
  const Eigen::MatrixXd zmat = expand_z(ds, Z);
  const SubsetTable st = make_subset_table(idx.P);
  const int n = idx.n, P = idx.P, M = 1 << P;
  const auto y = labels_of(ds);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(idx.dim(), idx.dim());
  std::vector<int> slot(P);
  const double inv_n2 = 1.0 / (double(n) * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int mask = 0; mask < M; ++mask) {
        double F = 0.0;
        for (int p = 0; p < P; ++p) {
          const bool on = (mask >> p) & 1;
          F += zmat(on ? a : b, p);
          slot[p] = slot_of(idx, ds, on ? a : b, p);
        }
        // The curvature weight is even in the argument, so both label terms
        // collapse onto the same second derivative at F.
        const double lam = st.lam[mask];
        const double c2 = st.weight[mask] * inv_n2 *
                          (lam * logistic_loss_second(y[a] * F) +
                           (1.0 - lam) * logistic_loss_second(y[b] * F));
        for (int u = 0; u < P; ++u)
          for (int v = 0; v < P; ++v) H(slot[u], slot[v]) += c2;
      }
  return H;
}

Eigen::MatrixXd jacobian_matrix(const Weights& W, const Dataset& ds) {
  if (W.m() != 1) throw std::invalid_argument("jacobian needs one neuron per sign");
  if (W.d() != ds.config.d) throw std::invalid_argument("weight width does not match data");
  const SlotIndex idx = make_slot_index(ds);
  const int d = ds.config.d;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * d, idx.dim());
  for (int si = 0; si < 2; ++si) {
    const int s = si == 0 ? 1 : -1;
    for (int k = 0; k < idx.K; ++k) {
      const int col = ds.bank.col(s, k);
      const int slot = idx.feat(s, k);
      J(col, slot) = phi_prime(W.w_plus(0, col), W.act);
      J(d + col, slot) = -phi_prime(W.w_minus(0, col), W.act);
    }
  }
  for (int i = 0; i < idx.n; ++i) {
    const auto& smp = ds.samples[i];
    for (int p = 0; p < idx.P; ++p) {
      if (p == smp.p_star) continue;
      const int slot = idx.patch(i, p);
      const auto x = smp.X.col(p);
      J.block(0, slot, d, 1) = phi_prime(W.w_plus.row(0).dot(x), W.act) * x;
      J.block(d, slot, d, 1) = -phi_prime(W.w_minus.row(0).dot(x), W.act) * x;
    }
  }
  return J;
}

double jacobian_min_singular(const Weights& W, const Dataset& ds) {
  const Eigen::MatrixXd J = jacobian_matrix(W, ds);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(J);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1);
}

double uniform_stationarity(int n_self, int n_other, int P, double z_self,
                            double z_other) {
  const double R = double(n_self) / double(n_other);
  double acc = R * logistic_loss_prime(P * z_self);
  double e = 0.0;
  for (int mu = 1; mu <= P; ++mu)
    e += mu * logistic_loss_prime(mu * z_self - (P - mu) * z_other);
  acc += 2.0 / (double(P) * (P + 1)) * e;
  acc += double(P - 1) / (3.0 * P);
  return acc;
}

GlobalMin solve_global_minimum(int n_plus, int n_minus, int P) {
  if (P < 2) throw std::invalid_argument("uniform optimum needs P >= 2");
  if (n_plus < 1 || n_minus < 1) throw std::invalid_argument("both classes must be populated");

  int iters = 0;
  // Inner solve: for fixed z1, the other class's stationarity is strictly
  // increasing in its own coordinate, negative at 0 and positive for large
  // arguments, so plain bisection applies.
  auto inner = [&](double z1) {
    auto f = [&](double z) { return uniform_stationarity(n_minus, n_plus, P, z, z1); };
    if (!(f(0.0) < 0.0)) throw std::runtime_error("inner bracket failed at 0");
    double hi = P * z1 + std::log(9.0);
    if (hi <= 0.0) hi = 1.0;
    int guard = 0;
    while (f(hi) <= 0.0) {
      hi *= 2.0;
      if (++guard > 200) throw std::runtime_error("inner bracket failed to expand");
    }
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      ++iters;
      if (f(mid) < 0.0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  };
  auto outer = [&](double z1) {
    return uniform_stationarity(n_plus, n_minus, P, z1, inner(z1));
  };

  double a = 1.0;
  double fa = outer(a);
  int guard = 0;
  if (fa > 0.0) {
    while (fa > 0.0) {
      a *= 0.5;
      fa = outer(a);
      if (++guard > 120) throw std::runtime_error("outer bracket failed to shrink");
    }
  }
  double b = 2.0 * a;
  double fb = outer(b);
  guard = 0;
  while (fb <= 0.0) {
    a = b;
    b *= 2.0;
    fb = outer(b);
    if (++guard > 60) throw std::runtime_error("outer bracket failed to expand");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    if (outer(mid) < 0.0) a = mid; else b = mid;
  }
  GlobalMin gm;
  gm.z1_star = 0.5 * (a + b);
  gm.zm1_star = inner(gm.z1_star);
  gm.res1 = uniform_stationarity(n_plus, n_minus, P, gm.z1_star, gm.zm1_star);
  gm.resm1 = uniform_stationarity(n_minus, n_plus, P, gm.zm1_star, gm.z1_star);
  gm.iterations = iters;
  return gm;
}

Eigen::VectorXd build_zhat(const Dataset& ds, const GlobalMin& gm) {
  const SlotIndex idx = make_slot_index(ds);
  Eigen::VectorXd Z(idx.dim());
  for (int k = 0; k < idx.K; ++k) {
    Z(idx.feat(1, k)) = gm.z1_star;
    Z(idx.feat(-1, k)) = -gm.zm1_star;
  }
  for (int i = 0; i < idx.n; ++i) {
    const auto& smp = ds.samples[i];
    const double v = smp.y > 0 ? gm.z1_star : -gm.zm1_star;
    for (int p = 0; p < idx.P; ++p)
      if (p != smp.p_star) Z(idx.patch(i, p)) = v;
  }
  return Z;
}

UniformReport verify_uniform_minimum(const Weights& W, const Dataset& ds,
                                     const GlobalMin& gm) {
  const Eigen::VectorXd Z = compute_z(W, ds);
  const Eigen::MatrixXd zmat = expand_z(ds, Z);
  UniformReport rep;
  rep.z1_star = gm.z1_star;
  rep.zm1_star = gm.zm1_star;
  for (int i = 0; i < ds.n(); ++i) {
    const double target = ds.samples[i].y > 0 ? gm.z1_star : gm.zm1_star;
    for (int p = 0; p < ds.config.P; ++p)
      rep.max_dev =
          std::max(rep.max_dev, std::abs(ds.samples[i].y * zmat(i, p) - target));
  }
  rep.grad_h_norm = h_grad(ds, Z).norm();
  return rep;
}

}  // namespace patchlab
