#include "patchlab/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "patchlab/activation.hpp"

namespace patchlab {

CoeffTable CoeffTable::zeros(int K, int n, int P) {
  CoeffTable t;
  for (int si = 0; si < 2; ++si) {
    t.gamma[si] = Eigen::MatrixXd::Zero(2, K);
    t.rho[si] = Eigen::MatrixXd::Zero(n, P);
  }
  return t;
}

double CoeffTable::max_abs() const {
  double m = 0.0;
  for (int si = 0; si < 2; ++si) {
    m = std::max(m, gamma[si].cwiseAbs().maxCoeff());
    if (rho[si].size() > 0) m = std::max(m, rho[si].cwiseAbs().maxCoeff());
  }
  return m;
}

SlotIndex make_slot_index(const Dataset& ds) {
  SlotIndex idx;
  idx.K = ds.config.K();
  idx.n = ds.n();
  idx.P = ds.config.P;
  idx.p_star.resize(idx.n);
  for (int i = 0; i < idx.n; ++i) idx.p_star[i] = ds.samples[i].p_star;
  return idx;
}

namespace {

std::string slot_name(const SlotIndex& idx, int slot) {
  std::ostringstream os;
  if (slot < 2 * idx.K) {
    const int s = slot < idx.K ? 1 : -1;
    const int k = slot < idx.K ? slot : slot - idx.K;
    os << "feature(s=" << (s > 0 ? "+1" : "-1") << ",k=" << k << ")";
  } else {
    const int rel = slot - 2 * idx.K;
    const int i = rel / (idx.P - 1);
    int off = rel % (idx.P - 1);
    const int p = off < idx.p_star[i] ? off : off + 1;
    os << "noise(i=" << i << ",p=" << p << ")";
  }
  return os.str();
}

// Signed read-out of a raw least-squares solution into the table convention
// for one side s.  The k=0 columns absorb the alpha part of the dominant
// patches, so the raw feature coefficients get the matching correction.
void convert_side(const Dataset& ds, const SlotIndex& idx, int s,
                  const Eigen::VectorXd& c, Eigen::MatrixXd& gamma,
                  Eigen::MatrixXd& rho) {
  const int K = idx.K, n = idx.n, P = idx.P;
  gamma.resize(2, K);
  rho = Eigen::MatrixXd::Zero(n, P);
  for (int spi = 0; spi < 2; ++spi) {
    const int sp = spi == 0 ? 1 : -1;
    for (int k = 0; k < K; ++k) gamma(spi, k) = double(s * sp) * c[idx.feat(sp, k)];
  }
  for (int i = 0; i < n; ++i) {
    const auto& smp = ds.samples[i];
    for (int p = 0; p < P; ++p) {
      if (p == smp.p_star) continue;
      rho(i, p) = double(s * smp.y) * c[idx.patch(i, p)] * smp.noise_sq[p];
    }
  }
  const double alpha = ds.config.alpha;
  for (int ui = 0; ui < 2; ++ui) {
    const int u = ui == 0 ? 1 : -1;
    double corr = 0.0;
    for (int i : ds.F[ui]) {
      const auto& smp = ds.samples[i];
      corr += double(s * smp.y) * rho(i, smp.p_tilde) / smp.noise_sq[smp.p_tilde];
    }
    if (u == s)
      gamma(Dataset::sidx(s), 0) -= alpha * corr;
    else
      gamma(Dataset::sidx(-s), 0) += alpha * corr;
  }
}

}  // namespace

CoeffProjector::CoeffProjector(const Dataset& ds)
    : ds_(&ds), idx_(make_slot_index(ds)) {
  const int d = ds.config.d;
  basis_ = Eigen::MatrixXd::Zero(d, idx_.dim());
  for (int si = 0; si < 2; ++si) {
    const int s = si == 0 ? 1 : -1;
    for (int k = 0; k < idx_.K; ++k)
      basis_(ds.bank.col(s, k), idx_.feat(s, k)) = 1.0;
  }
  for (int i = 0; i < idx_.n; ++i) {
    const auto& smp = ds.samples[i];
    for (int p = 0; p < idx_.P; ++p) {
      if (p == smp.p_star) continue;
      basis_.col(idx_.patch(i, p)) = smp.noise[p];
    }
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(basis_);
  const auto& sv = svd.singularValues();
  smin_ = sv(sv.size() - 1);
  cond_ = smin_ > 0.0 ? sv(0) / smin_ : std::numeric_limits<double>::infinity();
  if (!(cond_ <= 1e10)) {
    // Name the most correlated column pair before refusing to solve.
    Eigen::VectorXd norms = basis_.colwise().norm();
    double worst = 0.0;
    int wa = 0, wb = 0;
    const Eigen::MatrixXd G = basis_.transpose() * basis_;
    for (int a = 0; a < idx_.dim(); ++a)
      for (int b = a + 1; b < idx_.dim(); ++b) {
        const double den = norms(a) * norms(b);
        const double cs = den > 0.0 ? std::abs(G(a, b)) / den : 1.0;
        if (cs > worst) { worst = cs; wa = a; wb = b; }
      }
    std::ostringstream os;
    os << "coefficient basis is numerically dependent (condition " << cond_
       << "); closest pair: " << slot_name(idx_, wa) << " and " << slot_name(idx_, wb)
       << " with |cos| = " << worst;
    throw std::runtime_error(os.str());
  }
  qr_.compute(basis_);
  normal_.compute(basis_.transpose() * basis_);
}

CoeffTable CoeffProjector::project(const Weights& W, const Weights& W0) const {
  if (W.m() != 1 || W0.m() != 1)
    throw std::invalid_argument("coefficient read-off needs one neuron per sign");
  if (W.d() != ds_->config.d || W0.d() != ds_->config.d)
    throw std::invalid_argument("weight width does not match data dimension");

  CoeffTable tab = CoeffTable::zeros(idx_.K, idx_.n, idx_.P);
  double res_sq = 0.0;
  double gap = 0.0;
  for (int si = 0; si < 2; ++si) {
    const int s = si == 0 ? 1 : -1;
    const auto& Wm = s > 0 ? W.w_plus : W.w_minus;
    const auto& W0m = s > 0 ? W0.w_plus : W0.w_minus;
    const Eigen::VectorXd target = (Wm.row(0) - W0m.row(0)).transpose();
    const Eigen::VectorXd c_qr = qr_.solve(target);
    const Eigen::VectorXd c_ne = normal_.solve(basis_.transpose() * target);
    Eigen::MatrixXd g2, r2;
    convert_side(*ds_, idx_, s, c_qr, tab.gamma[si], tab.rho[si]);
    convert_side(*ds_, idx_, s, c_ne, g2, r2);
    gap = std::max(gap, (tab.gamma[si] - g2).cwiseAbs().maxCoeff());
    if (r2.size() > 0) gap = std::max(gap, (tab.rho[si] - r2).cwiseAbs().maxCoeff());
    res_sq += (basis_ * c_qr - target).squaredNorm();
  }
  tab.residual_norm = std::sqrt(res_sq);
  tab.solver_gap = gap;
  return tab;
}

CoeffTable project_coefficients(const Weights& W, const Weights& W0, const Dataset& ds) {
  return CoeffProjector(ds).project(W, W0);
}

Weights reconstruct_weights(const CoeffTable& tab, const Weights& W0, const Dataset& ds) {
  if (W0.m() != 1) throw std::invalid_argument("reconstruction needs one neuron per sign");
  const int d = ds.config.d;
  const int K = ds.config.K();
  Weights W = W0;
  for (int si = 0; si < 2; ++si) {
    const int s = si == 0 ? 1 : -1;
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(d);
    for (int k = 0; k < K; ++k) {
      delta(ds.bank.col(s, k)) += tab.gamma[si](si, k);
      delta(ds.bank.col(-s, k)) -= tab.gamma[si](1 - si, k);
    }
    for (int i = 0; i < ds.n(); ++i) {
      const auto& smp = ds.samples[i];
      const double sgn = smp.y == s ? 1.0 : -1.0;
      for (int p = 0; p < ds.config.P; ++p) {
        if (p == smp.p_star) continue;
        delta += sgn * tab.rho[si](i, p) / smp.noise_sq[p] * smp.noise[p];
      }
    }
    for (int ui = 0; ui < 2; ++ui) {
      const int u = ui == 0 ? 1 : -1;
      double corr = 0.0;
      for (int i : ds.F[ui]) {
        const auto& smp = ds.samples[i];
        corr += double(s * smp.y) * tab.rho[si](i, smp.p_tilde) / smp.noise_sq[smp.p_tilde];
      }
      delta(ds.bank.col(u, 0)) += ds.config.alpha * corr;
    }
    if (s > 0)
      W.w_plus.row(0) += delta.transpose();
    else
      W.w_minus.row(0) += delta.transpose();
  }
  return W;
}

CoeffRecursion::CoeffRecursion(const Dataset& ds)
    : ds_(&ds), tab_(CoeffTable::zeros(ds.config.K(), ds.n(), ds.config.P)) {}

void CoeffRecursion::step(Method method, double eta, const Eigen::MatrixXd& drive,
                          const Eigen::MatrixXd& t_plus, const Eigen::MatrixXd& t_minus,
                          const Weights& W) {
  if (W.m() != 1) throw std::invalid_argument("coefficient recursion needs one neuron per sign");
  const Dataset& ds = *ds_;
  const int n = ds.n(), P = ds.config.P, K = ds.config.K();

  // r(i,p) = dLoss/dz_i^(p); the mixing drive already carries the labels.
  Eigen::MatrixXd r(n, P);
  for (int i = 0; i < n; ++i) {
    const double lab = method == Method::CUTMIX ? 1.0 : double(ds.samples[i].y);
    for (int p = 0; p < P; ++p) r(i, p) = -lab * drive(i, p) / n;
  }

  for (int si = 0; si < 2; ++si) {
    const int s = si == 0 ? 1 : -1;
    const auto& Wm = s > 0 ? W.w_plus : W.w_minus;
    const auto& ts = s > 0 ? t_plus : t_minus;
    for (int spi = 0; spi < 2; ++spi) {
      const int sp = spi == 0 ? 1 : -1;
      for (int k = 0; k < K; ++k) {
        double acc = 0.0;
        for (int i : ds.Vsk[spi][k]) acc += r(i, ds.samples[i].p_star);
        tab_.gamma[si](spi, k) +=
            -double(sp) * eta * acc * phi_prime(Wm(0, ds.bank.col(sp, k)), W.act);
      }
    }
    for (int i = 0; i < n; ++i) {
      const auto& smp = ds.samples[i];
      for (int p = 0; p < P; ++p) {
        if (p == smp.p_star) continue;
        tab_.rho[si](i, p) +=
            -double(smp.y) * eta * r(i, p) * phi_prime(ts(i, p), W.act) * smp.noise_sq[p];
      }
    }
  }
}

namespace {

struct ClauseAccum {
  EInitReport* rep;

  // Relative slack of the binding member: positive slack passes.
  void add(const std::string& name, const std::string& ineq, double margin) {
    EInitClause c;
    c.name = name;
    c.inequality = ineq;
    c.margin = margin;
    c.pass = margin >= 0.0;
    rep->clauses.push_back(std::move(c));
  }
};

double band_margin(double v, double lo, double hi) {
  const double m_lo = (v - lo) / std::max(std::abs(lo), 1e-300);
  const double m_hi = (hi - v) / std::max(std::abs(hi), 1e-300);
  return std::min(m_lo, m_hi);
}

double cap_margin(double v, double cap) {
  return (cap - v) / std::max(std::abs(cap), 1e-300);
}

}  // namespace

EInitReport check_e_init(const Dataset& ds, const Weights& W0, double sigma0) {
  const DataConfig& cfg = ds.config;
  const int n = ds.n(), P = cfg.P, K = cfg.K(), d = cfg.d, m = W0.m();
  const double logd = std::log(double(d));
  const double sd = cfg.sigma_d, sb = cfg.sigma_b;
  EInitReport rep;
  ClauseAccum out{&rep};

  {
    const double lo = 25.0 * n / 52.0, hi = 27.0 * n / 52.0;
    double margin = std::numeric_limits<double>::infinity();
    for (int si = 0; si < 2; ++si)
      margin = std::min(margin, band_margin(double(ds.V[si].size()), lo, hi));
    out.add("class_balance", "25n/52 <= |V_s| <= 27n/52", margin);
  }
  {
    double margin = std::numeric_limits<double>::infinity();
    for (int si = 0; si < 2; ++si)
      for (int k = 0; k < K; ++k) {
        const double lo = cfg.rho[k] * n / 4.0, hi = 3.0 * cfg.rho[k] * n / 4.0;
        margin = std::min(margin, band_margin(double(ds.Vsk[si][k].size()), lo, hi));
      }
    out.add("feature_counts", "rho_k n/4 <= |V_{s,k}| <= 3 rho_k n/4", margin);
  }
  {
    std::vector<bool> seen(P, false);
    for (int i : ds.Vsk[0][0]) seen[ds.samples[i].p_star] = true;
    const bool all = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
    out.add("position_coverage", "feature positions of V_{+1,0} cover [P]", all ? 1.0 : -1.0);
  }
  {
    const double cap = sigma0 * logd;
    double worst = 0.0;
    for (int nu = 0; nu < m; ++nu)
      for (int col = 0; col < 2 * K; ++col) {
        worst = std::max(worst, std::abs(W0.w_plus(nu, col)));
        worst = std::max(worst, std::abs(W0.w_minus(nu, col)));
      }
    out.add("init_feature_overlap", "|<w0, v>| <= sigma0 log d", cap_margin(worst, cap));
  }
  {
    const double cap_dom = sigma0 * sd * std::sqrt(double(d)) * logd;
    const double cap_bg = sigma0 * sb * std::sqrt(double(d)) * logd;
    double worst_dom = 0.0, worst_bg = 0.0;
    for (const auto& smp : ds.samples)
      for (int p = 0; p < P; ++p) {
        if (p == smp.p_star) continue;
        for (int nu = 0; nu < m; ++nu) {
          const double a = std::abs(W0.w_plus.row(nu).dot(smp.noise[p]));
          const double b = std::abs(W0.w_minus.row(nu).dot(smp.noise[p]));
          double& w = p == smp.p_tilde ? worst_dom : worst_bg;
          w = std::max(w, std::max(a, b));
        }
      }
    out.add("init_dominant_overlap", "|<w0, xi_dom>| <= sigma0 sigma_d sqrt(d) log d",
            cap_margin(worst_dom, cap_dom));
    if (P > 2)
      out.add("init_background_overlap", "|<w0, xi_bg>| <= sigma0 sigma_b sqrt(d) log d",
              cap_margin(worst_bg, cap_bg));
    else
      out.add("init_background_overlap", "no background patches", 1.0);
  }
  {
    const double lo = 0.5 * sd * sd * d, hi = 1.5 * sd * sd * d;
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& smp : ds.samples)
      margin = std::min(margin, band_margin(smp.noise_sq[smp.p_tilde], lo, hi));
    out.add("dominant_norms", "sigma_d^2 d / 2 <= |xi_dom|^2 <= 3 sigma_d^2 d / 2", margin);
  }

  Eigen::MatrixXd Nd(d, n);
  for (int i = 0; i < n; ++i) Nd.col(i) = ds.samples[i].noise[ds.samples[i].p_tilde];
  const int nbg = n * (P - 2);
  Eigen::MatrixXd Nb(d, std::max(nbg, 0));
  {
    int c = 0;
    for (const auto& smp : ds.samples)
      for (int p = 0; p < P; ++p)
        if (p != smp.p_star && p != smp.p_tilde) Nb.col(c++) = smp.noise[p];
  }
  {
    const double cap = sd * sd * std::sqrt(double(d)) * logd;
    const Eigen::MatrixXd G = Nd.transpose() * Nd;
    double worst = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) worst = std::max(worst, std::abs(G(i, j)));
    out.add("dominant_cross", "|<xi_dom_i, xi_dom_j>| <= sigma_d^2 sqrt(d) log d",
            cap_margin(worst, cap));
  }
  if (nbg > 0) {
    const double cap = sd * sb * std::sqrt(double(d)) * logd;
    const double worst = (Nd.transpose() * Nb).cwiseAbs().maxCoeff();
    out.add("dominant_background_cross",
            "|<xi_dom, xi_bg>| <= sigma_d sigma_b sqrt(d) log d", cap_margin(worst, cap));

    const double lo = 0.5 * sb * sb * d, hi = 1.5 * sb * sb * d;
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& smp : ds.samples)
      for (int p = 0; p < P; ++p)
        if (p != smp.p_star && p != smp.p_tilde)
          margin = std::min(margin, band_margin(smp.noise_sq[p], lo, hi));
    out.add("background_norms", "sigma_b^2 d / 2 <= |xi_bg|^2 <= 3 sigma_b^2 d / 2", margin);

    const double cap2 = sb * sb * std::sqrt(double(d)) * logd;
    const Eigen::MatrixXd G = Nb.transpose() * Nb;
    double worst2 = 0.0;
    for (int a = 0; a < nbg; ++a)
      for (int b = a + 1; b < nbg; ++b) worst2 = std::max(worst2, std::abs(G(a, b)));
    out.add("background_cross", "|<xi_bg_a, xi_bg_b>| <= sigma_b^2 sqrt(d) log d",
            cap_margin(worst2, cap2));
  } else {
    out.add("dominant_background_cross", "no background patches", 1.0);
    out.add("background_norms", "no background patches", 1.0);
    out.add("background_cross", "no background patches", 1.0);
  }
  {
    // Realized patches plus features must be independent for the coefficient
    // read-off to be well posed.
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, 2 * K + n * (P - 1));
    SlotIndex idx = make_slot_index(ds);
    for (int si = 0; si < 2; ++si) {
      const int s = si == 0 ? 1 : -1;
      for (int k = 0; k < K; ++k) M(ds.bank.col(s, k), idx.feat(s, k)) = 1.0;
    }
    for (int i = 0; i < n; ++i) {
      const auto& smp = ds.samples[i];
      for (int p = 0; p < P; ++p)
        if (p != smp.p_star) M.col(idx.patch(i, p)) = smp.X.col(p);
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
    const auto& sv = svd.singularValues();
    rep.min_singular = sv(sv.size() - 1);
    const double floor = sv(0) * 1e-10;
    out.add("patch_independence", "sigma_min of [features | patches] > 0",
            rep.min_singular > floor ? 1.0 : -1.0);
  }

  rep.all_pass = std::all_of(rep.clauses.begin(), rep.clauses.end(),
                             [](const EInitClause& c) { return c.pass; });
  return rep;
}

double ApproxErrorReport::max_gap() const {
  double m = 0.0;
  for (double v : {feat_self_lin, feat_self_phi, feat_opp_lin, feat_opp_phi,
                   noise_self_lin, noise_self_phi, noise_opp_lin, noise_opp_phi,
                   dom_self_phi, dom_opp_phi})
    m = std::max(m, v);
  return m;
}

ApproxErrorReport approx_error_audit(const Weights& W, const CoeffTable& tab,
                                     const Dataset& ds) {
  if (W.m() != 1) throw std::invalid_argument("alignment audit needs one neuron per sign");
  const DataConfig& cfg = ds.config;
  const int K = cfg.K(), P = cfg.P;
  const double beta = W.act.beta;
  ApproxErrorReport rep;

  for (int si = 0; si < 2; ++si) {
    const int s = si == 0 ? 1 : -1;
    const auto& Wm = s > 0 ? W.w_plus : W.w_minus;
    for (int k = 0; k < K; ++k) {
      const double self = Wm(0, ds.bank.col(s, k));
      const double opp = Wm(0, ds.bank.col(-s, k));
      const double g_self = tab.gamma[si](si, k);
      const double g_opp = tab.gamma[si](1 - si, k);
      rep.feat_self_lin = std::max(rep.feat_self_lin, std::abs(self - g_self));
      rep.feat_self_phi = std::max(rep.feat_self_phi, std::abs(phi(self, W.act) - g_self));
      rep.feat_opp_lin = std::max(rep.feat_opp_lin, std::abs(opp + g_opp));
      rep.feat_opp_phi = std::max(rep.feat_opp_phi, std::abs(phi(opp, W.act) + beta * g_opp));
    }
  }

  for (int i = 0; i < ds.n(); ++i) {
    const auto& smp = ds.samples[i];
    const int yi = Dataset::sidx(smp.y);
    for (int p = 0; p < P; ++p) {
      if (p == smp.p_star) continue;
      const double tp = W.w_plus.row(0).dot(smp.noise[p]);
      const double tm = W.w_minus.row(0).dot(smp.noise[p]);
      const double t_self = smp.y > 0 ? tp : tm;
      const double t_opp = smp.y > 0 ? tm : tp;
      const double r_self = tab.rho[yi](i, p);
      const double r_opp = tab.rho[1 - yi](i, p);
      rep.noise_self_lin = std::max(rep.noise_self_lin, std::abs(t_self - r_self));
      rep.noise_self_phi =
          std::max(rep.noise_self_phi, std::abs(phi(t_self, W.act) - r_self));
      rep.noise_opp_lin = std::max(rep.noise_opp_lin, std::abs(t_opp + r_opp));
      rep.noise_opp_phi =
          std::max(rep.noise_opp_phi, std::abs(phi(t_opp, W.act) + beta * r_opp));
      if (p == smp.p_tilde) {
        const double xp = W.w_plus.row(0).dot(smp.X.col(p));
        const double xm = W.w_minus.row(0).dot(smp.X.col(p));
        const double x_self = smp.y > 0 ? xp : xm;
        const double x_opp = smp.y > 0 ? xm : xp;
        rep.dom_self_phi =
            std::max(rep.dom_self_phi, std::abs(phi(x_self, W.act) - r_self));
        rep.dom_opp_phi =
            std::max(rep.dom_opp_phi, std::abs(phi(x_opp, W.act) + beta * r_opp));
      }
    }
  }
  return rep;
}

}  // namespace patchlab
