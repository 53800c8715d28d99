#include "patchlab/cutmix_core.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>

namespace patchlab {

SubsetTable make_subset_table(int P) {
  if (P < 1 || P > 20) throw std::invalid_argument("subset table needs 1 <= P <= 20");
  SubsetTable st;
  st.P = P;
  const int M = 1 << P;
  std::vector<double> binom(static_cast<size_t>(P) + 1, 1.0);
  for (int k = 1; k <= P; ++k) binom[k] = binom[k - 1] * double(P - k + 1) / double(k);
  st.weight.resize(M);
  st.lam.resize(M);
  for (int mask = 0; mask < M; ++mask) {
    const int c = __builtin_popcount(static_cast<unsigned>(mask));
    st.weight[mask] = 1.0 / (double(P + 1) * binom[c]);
    st.lam[mask] = double(c) / double(P);
  }
  return st;
}

namespace {

struct Partial {
  double h = 0.0;
  Eigen::MatrixXd B;
};

// One ordered-pair sweep for a in [lo, hi), all b.  The mixed point takes a's
// patches on S and b's patches off S, so F = rowsum[b] + sum_{p in S} diff[p].
// One exp/log1p pair per (a, b, S) covers both labels' loss and slope.
void accumulate_rows(const Eigen::MatrixXd& zmat, const std::vector<int>& y,
                     const std::vector<double>& rowsum, const SubsetTable& st,
                     int lo, int hi, Partial& out) {
  const int n = static_cast<int>(zmat.rows());
  const int P = st.P;
  const int M = 1 << P;
  const int full = M - 1;
  std::vector<double> za(P), diff(P);
  for (int a = lo; a < hi; ++a) {
    for (int p = 0; p < P; ++p) za[p] = zmat(a, p);
    const int ya = y[a];
    for (int b = 0; b < n; ++b) {
      const double sb = rowsum[b];
      for (int p = 0; p < P; ++p) diff[p] = za[p] - zmat(b, p);
      const int yb = y[b];
      for (int mask = 0; mask < M; ++mask) {
        double F = sb;
        for (int bits = mask; bits; bits &= bits - 1)
          F += diff[__builtin_ctz(static_cast<unsigned>(bits))];
        const double fabsF = std::abs(F);
        const double t = std::exp(-fabsF);
        const double u = std::log1p(t);
        const double sp = t / (1.0 + t);
        const double sn = 1.0 / (1.0 + t);
        // Values at +F and -F: loss is u on the sign matching F, |F|+u on the
        // other; the slopes are -sp and -sn likewise.
        double lpos, lneg, dpos, dneg;
        if (F >= 0) {
          lpos = u; lneg = fabsF + u; dpos = -sp; dneg = -sn;
        } else {
          lpos = fabsF + u; lneg = u; dpos = -sn; dneg = -sp;
        }
        const double la = (ya > 0) ? lpos : lneg;
        const double lb = (yb > 0) ? lpos : lneg;
        const double dya = (ya > 0) ? dpos : -dneg;  // y * loss'(y F)
        const double dyb = (yb > 0) ? dpos : -dneg;
        const double wa = st.lam[mask];
        const double wb = 1.0 - wa;
        const double w = st.weight[mask];
        out.h += w * (wa * la + wb * lb);
        const double gw = w * (-(wa * dya + wb * dyb));
        for (int bits = mask; bits; bits &= bits - 1)
          out.B(a, __builtin_ctz(static_cast<unsigned>(bits))) += gw;
        for (int bits = full & ~mask; bits; bits &= bits - 1)
          out.B(b, __builtin_ctz(static_cast<unsigned>(bits))) += gw;
      }
    }
  }
}

}  // namespace

CutmixAccum cutmix_accumulate(const Eigen::MatrixXd& zmat,
                              const std::vector<int>& labels,
                              const SubsetTable& subsets, int threads) {
  const int n = static_cast<int>(zmat.rows());
  const int P = static_cast<int>(zmat.cols());
  if (P != subsets.P) throw std::invalid_argument("subset table built for a different P");
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("label count does not match contribution rows");
  for (int v : labels)
    if (v != 1 && v != -1) throw std::invalid_argument("labels must be +1 or -1");

  std::vector<double> rowsum(n);
  for (int i = 0; i < n; ++i) rowsum[i] = zmat.row(i).sum();

  // The chunk partition is fixed (independent of the thread count), and the
  // partials reduce in ascending chunk order, so every thread count yields the
  // same bits.
  const int nchunks = std::max(1, std::min(n, 16));
  std::vector<Partial> parts(nchunks);
  for (auto& pt : parts) pt.B = Eigen::MatrixXd::Zero(n, P);
  auto chunk_lo = [&](int c) { return static_cast<int>(std::int64_t(c) * n / nchunks); };

  if (threads <= 1 || nchunks == 1) {
    for (int c = 0; c < nchunks; ++c)
      accumulate_rows(zmat, labels, rowsum, subsets, chunk_lo(c), chunk_lo(c + 1), parts[c]);
  } else {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (;;) {
        const int c = next.fetch_add(1);
        if (c >= nchunks) return;
        accumulate_rows(zmat, labels, rowsum, subsets, chunk_lo(c), chunk_lo(c + 1), parts[c]);
      }
    };
    std::vector<std::thread> pool;
    const int nt = std::min(threads, nchunks);
    pool.reserve(nt);
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  CutmixAccum acc;
  acc.B = Eigen::MatrixXd::Zero(n, P);
  for (int c = 0; c < nchunks; ++c) {
    acc.h_raw += parts[c].h;
    acc.B += parts[c].B;
  }
  return acc;
}

}  // namespace patchlab
