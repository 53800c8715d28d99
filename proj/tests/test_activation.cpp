#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "patchlab/activation.hpp"

using patchlab::ActivationParams;
using patchlab::phi;
using patchlab::phi_prime;

namespace {
const ActivationParams kLeaky{0.1, 1.0};
}

TEST_CASE("phi matches hand-computed branch values at beta=0.1, r=1") {
  CHECK(phi(0.0, kLeaky) == 0.0);
  CHECK(phi(2.0, kLeaky) == doctest::Approx(1.55).epsilon(1e-14));
  CHECK(phi(-2.0, kLeaky) == doctest::Approx(-0.2).epsilon(1e-14));
  CHECK(phi(0.5, kLeaky) == doctest::Approx(0.1625).epsilon(1e-14));
}

TEST_CASE("phi is C1 at the branch points") {
  const double eps = 1e-9;
  // both one-sided values at r equal (1+beta)*r/2
  CHECK(phi(1.0, kLeaky) == doctest::Approx(0.55).epsilon(1e-14));
  // 1e-15 slack: each phi value rounds at ~1e-16, and the true gap is 2*eps
  // up to O(eps^2), so the bound is attained to machine precision.
  CHECK(std::abs(phi(1.0 - eps, kLeaky) - phi(1.0 + eps, kLeaky)) <= 2 * eps + 1e-15);
  CHECK(std::abs(phi(-eps, kLeaky) - phi(eps, kLeaky)) <= 2 * eps + 1e-15);
  CHECK(phi_prime(-0.0, kLeaky) == 0.1);
  CHECK(phi_prime(0.0, kLeaky) == 0.1);
  CHECK(phi_prime(1.0, kLeaky) == 1.0);
  CHECK(std::abs(phi_prime(1.0 - eps, kLeaky) - 1.0) <= 1e-8);
  CHECK(std::abs(phi_prime(eps, kLeaky) - 0.1) <= 1e-8);
}

TEST_CASE("phi_prime stays in [beta, 1] and phi is monotone") {
  for (const auto& a : {ActivationParams{0.1, 1.0}, ActivationParams{0.3, 0.5},
                        ActivationParams{1.0, 2.0}}) {
    double prev = phi(-6.0, a);
    for (int i = -600; i <= 600; ++i) {
      const double z = i / 100.0;
      const double d = phi_prime(z, a);
      CHECK(d >= a.beta - 1e-15);
      CHECK(d <= 1.0 + 1e-15);
      const double v = phi(z, a);
      if (i > -600) CHECK(v >= prev - 1e-15);
      prev = v;
    }
  }
}

TEST_CASE("phi stays within (1-beta)r/2 of the identity for z >= 0") {
  const double bound = 0.5 * (1.0 - kLeaky.beta) * kLeaky.r;
  for (int i = 0; i <= 1000; ++i) {
    const double z = i / 50.0;
    CHECK(std::abs(phi(z, kLeaky) - z) <= bound + 1e-15);
  }
}

TEST_CASE("phi_prime agrees with a central difference away from the kinks") {
  const double h = 1e-7;
  for (double z : {-3.0, -0.4, 0.2, 0.51, 0.93, 1.7, 4.0}) {
    const double fd = (phi(z + h, kLeaky) - phi(z - h, kLeaky)) / (2 * h);
    CHECK(phi_prime(z, kLeaky) == doctest::Approx(fd).epsilon(1e-6));
  }
}
