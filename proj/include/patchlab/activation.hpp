#pragma once

namespace patchlab {

struct ActivationParams {
  double beta = 0.1;  // slope for z <= 0, in (0, 1]
  double r = 1.0;     // length of the quadratic blend [0, r]; slope 1 above r
};

// C1 piecewise activation: beta*z below 0, quadratic blend on [0, r], affine
// with unit slope above r. phi(0) = 0; both one-sided values at r equal
// (1+beta)*r/2, so value and derivative glue at 0 and r.
inline double phi(double z, const ActivationParams& a) {
  if (z >= a.r) return z - 0.5 * (1.0 - a.beta) * a.r;
  if (z <= 0.0) return a.beta * z;
  return 0.5 * (1.0 - a.beta) / a.r * z * z + a.beta * z;
}

// Derivative of phi; ranges over [beta, 1].
inline double phi_prime(double z, const ActivationParams& a) {
  if (z >= a.r) return 1.0;
  if (z <= 0.0) return a.beta;
  return (1.0 - a.beta) / a.r * z + a.beta;
}

}  // namespace patchlab
