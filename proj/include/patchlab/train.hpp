#pragma once

#include <string>
#include <utility>
#include <vector>

#include "patchlab/data.hpp"
#include "patchlab/decompose.hpp"
#include "patchlab/method.hpp"
#include "patchlab/model.hpp"

namespace patchlab {

struct TrainConfig {
  Method method = Method::ERM;
  double eta = 1.0;
  int T = 100;
  int C = 0;  // cutout mask size; the mixing method ignores it
  int log_every = 1;
  double grad_tol = 0.0;  // stop once the gradient norm falls below (0 = off)
  int threads = 1;

  void validate(int P) const;
};

struct TraceRow {
  int t = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::vector<double> feat_out;  // phi readout gap per feature: +1 block then -1
  double acc_train = 0.0;
  double acc_aug = 0.0;
  double gamma_self_max = 0.0, gamma_opp_max = 0.0;
  double rho_self_max = 0.0, rho_opp_max = 0.0;
};

// Exact full-batch objective and gradient for each trainer; all three reduce
// to the same assembly from a per-sample-per-patch drive matrix.
std::pair<double, Gradient> erm_loss_and_grad(const Weights& W, const Dataset& ds);
std::pair<double, Gradient> cutout_loss_and_grad(const Weights& W, const Dataset& ds,
                                                 int C);
std::pair<double, Gradient> cutmix_loss_and_grad(const Weights& W, const Dataset& ds,
                                                 int threads = 1);

struct RunResult {
  Weights W;
  Weights W0;
  std::vector<TraceRow> trace;
  std::vector<std::pair<int, CoeffTable>> coeff_steps;  // recursion at logged steps
  bool diverged = false;
  bool tol_fired = false;
  int steps_run = 0;
  int descent_violations = 0;  // mixing only, counted when eta <= 1/L
};

// Full-batch gradient descent for T steps from W0.  Logs at t = 0, every
// log_every steps, and at the final step; on a non-finite loss or gradient the
// last finite weights are kept and `diverged` is set.  With a single neuron
// per sign the coefficient recursion runs alongside and snapshots at logged
// steps.
RunResult run_training(const Weights& W0, const Dataset& ds, const TrainConfig& cfg);

void write_trace_csv(const std::vector<TraceRow>& trace, int K, const std::string& path);

// Gradient-Lipschitz constant of the mixing objective used for the step-size
// guard: 9 * P * sigma_d^2 * d / r.
double smoothness_constant(const DataConfig& cfg, double r);

}  // namespace patchlab
