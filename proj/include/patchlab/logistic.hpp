#pragma once

#include <cmath>

namespace patchlab {

// log(1 + exp(-z)), overflow-safe: for z < 0 the naive form blows up, so use
// -z + log1p(exp(z)) there.
inline double logistic_loss(double z) {
  if (z >= 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

// d/dz log(1 + exp(-z)) = -1/(1 + exp(z)), always in (-1, 0).
inline double logistic_loss_prime(double z) {
  if (z >= 0.0) {
    const double t = std::exp(-z);
    return -t / (1.0 + t);
  }
  return -1.0 / (1.0 + std::exp(z));
}

// Second derivative sigma(z) * (1 - sigma(z)); even in z, bounded by 1/4.
inline double logistic_loss_second(double z) {
  const double t = std::exp(-std::abs(z));
  const double s = t / (1.0 + t);
  return s * (1.0 - s);
}

}  // namespace patchlab
