#pragma once

// Scalar kernels shared by the closed-form flow: sinc, the entire function
// (e^z - 1)/z and divided differences of exp on complex nodes. All of them
// are evaluated without catastrophic cancellation near coincident nodes.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

namespace nilsynth::detail {

using Complex = std::complex<double>;

inline double sinc(double z) {
  if (std::abs(z) < 1e-4) {
    const double z2 = z * z;
    return 1.0 - z2 / 6.0 + z2 * z2 / 120.0;
  }
  return std::sin(z) / z;
}

/// (e^z - 1) / z, equal to 1 at z = 0.
inline Complex phi1(Complex z) {
  if (std::abs(z) < 1.0) {
    Complex term(1.0, 0.0);
    Complex sum = term;
    for (int n = 1; n < 22; ++n) {
      term *= z / static_cast<double>(n + 1);
      sum += term;
    }
    return sum;
  }
  return (std::exp(z) - 1.0) / z;
}

/// exp[a, b], the first divided difference of exp.
inline Complex exp_dd1(Complex a, Complex b) { return std::exp(a) * phi1(b - a); }

/// exp[z0, z1, z2], the second divided difference of exp (symmetric in its nodes).
inline Complex exp_dd2(Complex z0, Complex z1, Complex z2) {
  const double d01 = std::abs(z0 - z1);
  const double d02 = std::abs(z0 - z2);
  const double d12 = std::abs(z1 - z2);
  const double spread = std::max({d01, d02, d12});
  if (spread < 1.0) {
    // Taylor expansion about the centroid: sum_n h_n(w) / (n + 2)!, with h_n the
    // complete homogeneous symmetric polynomials of the shifted nodes.
    const Complex c = (z0 + z1 + z2) / 3.0;
    const Complex a = z0 - c, b = z1 - c, d = z2 - c;
    Complex ha = 1.0, hab = 1.0, habd = 1.0;  // degree-0 values
    Complex sum = 0.5;                        // h_0 / 2!
    double fact = 2.0;
    for (int n = 1; n < 24; ++n) {
      ha *= a;
      hab = ha + b * hab;
      habd = hab + d * habd;
      fact *= static_cast<double>(n + 2);
      sum += habd / fact;
    }
    return std::exp(c) * sum;
  }
  // Divide by the farthest pair so the quotient is well conditioned.
  Complex p = z0, q = z1, s = z2;
  if (d02 >= d01 && d02 >= d12) {
    p = z0; q = z2; s = z1;
  } else if (d12 >= d01 && d12 >= d02) {
    p = z1; q = z2; s = z0;
  }
  return (exp_dd1(s, q) - exp_dd1(s, p)) / (q - p);
}

}  // namespace nilsynth::detail
