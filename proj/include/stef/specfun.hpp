#pragma once

// Scalar special functions for the radial solution hierarchy. All routines
// are real-valued and restricted to the argument ranges that the field
// solutions actually produce.

namespace stef::specfun {

struct SpecFunResult {
  double value = 0.0;
  double est_abs_error = 0.0;  // >= 0
};

inline constexpr double kEulerGamma = 0.57721566490153286060651209008240243;

/// Gamma function for z > 0 (Lanczos, g = 7), relative error ~1e-15.
double gamma_fn(double z);

/// log Gamma(z) for z > 0.
double log_gamma_fn(double z);

/// Rising factorial a (a+1) ... (a+n-1); 1 for n = 0.
double pochhammer(double a, unsigned n);

/// Argument at which kummer_m and bessel_i leave the power series.
inline constexpr double kSeriesLimit = 30.0;

/// Kummer confluent hypergeometric M(a, b, z) for z >= 0.
///
/// Power series for z <= 30. Above that the large-argument expansion
///   M ~ Gamma(b)/Gamma(a) e^z z^(a-b) sum_k (b-a)_k (1-a)_k / (k! z^k)
/// truncated at its smallest term; est_abs_error is that term scaled.
SpecFunResult kummer_m(double a, double b, double z);

/// Modified Bessel function of the first kind I_nu(z), nu >= 0, z >= 0.
SpecFunResult bessel_i(double nu, double z);

/// Argument at which the K0/K1 evaluation switches from the power series
/// to the integral representation.
inline constexpr double kBesselKSwitch = 2.0;

/// Modified Bessel function of the second kind, order zero, z > 0.
///
/// z < 2: power series around the origin. z >= 2: trapezoidal rule on
/// K0(z) = int_0^inf exp(-z cosh s) ds, which converges geometrically in
/// the step size for this integrand.
SpecFunResult bessel_k0(double z);

/// K1(z) = -K0'(z), z > 0; same two-regime strategy as bessel_k0.
SpecFunResult bessel_k1(double z);

}  // namespace stef::specfun
