#include "stef/specfun.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "stef/errors.hpp"

namespace stef::specfun {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxTerms = 500;
constexpr double kTruncation = 1e-16;

constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczos = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

bool is_nonpositive_integer(double x) { return x <= 0.0 && std::floor(x) == x; }

double lanczos_sum(double zm1) {
  double x = kLanczos[0];
  for (std::size_t i = 1; i < kLanczos.size(); ++i) x += kLanczos[i] / (zm1 + static_cast<double>(i));
  return x;
}

}  // namespace

double gamma_fn(double z) {
  if (!(z > 0.0)) throw DomainError("gamma_fn: argument must be positive");
  if (z < 0.5) {
    // Reflection keeps the Lanczos sum in its accurate range.
    return std::numbers::pi / (std::sin(std::numbers::pi * z) * gamma_fn(1.0 - z));
  }
  const double zm1 = z - 1.0;
  const double t = zm1 + kLanczosG + 0.5;
  return std::sqrt(2.0 * std::numbers::pi) * std::pow(t, zm1 + 0.5) * std::exp(-t) *
         lanczos_sum(zm1);
}

double log_gamma_fn(double z) {
  if (!(z > 0.0)) throw DomainError("log_gamma_fn: argument must be positive");
  if (z < 0.5) {
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * z)) - log_gamma_fn(1.0 - z);
  }
  const double zm1 = z - 1.0;
  const double t = zm1 + kLanczosG + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (zm1 + 0.5) * std::log(t) - t +
         std::log(lanczos_sum(zm1));
}

double pochhammer(double a, unsigned n) {
  double p = 1.0;
  for (unsigned k = 0; k < n; ++k) p *= a + static_cast<double>(k);
  return p;
}

namespace {

SpecFunResult kummer_series(double a, double b, double z) {
  double term = 1.0;
  double sum = 1.0;
  double abs_sum = 1.0;
  int n = 0;
  for (; n < kMaxTerms; ++n) {
    term *= (a + n) / (b + n) * z / (n + 1);
    sum += term;
    abs_sum += std::abs(term);
    if (term == 0.0 || std::abs(term) < kTruncation * std::abs(sum)) break;
  }
  double err = 4.0 * kEps * abs_sum + std::abs(term);
  if (n == kMaxTerms) err = std::max(err, std::abs(term) * kMaxTerms);
  return {sum, err};
}

SpecFunResult kummer_asymptotic(double a, double b, double z) {
  const double log_prefactor = log_gamma_fn(b) - log_gamma_fn(a) + z + (a - b) * std::log(z);
  const double prefactor = std::exp(log_prefactor);
  double term = 1.0;
  double sum = 1.0;
  double omitted = 0.0;
  for (int k = 0; k < kMaxTerms; ++k) {
    const double next = term * (b - a + k) * (1.0 - a + k) / ((k + 1) * z);
    if (next == 0.0) {  // terminating expansion, exact up to rounding
      omitted = 0.0;
      break;
    }
    if (std::abs(next) >= std::abs(term)) {  // smallest term reached
      omitted = std::abs(next);
      break;
    }
    sum += next;
    term = next;
    omitted = std::abs(next);
    if (std::abs(next) < kTruncation * std::abs(sum)) break;
  }
  const double value = prefactor * sum;
  // Rounding in the exponentiated prefactor grows with its logarithm.
  const double rounding = 8.0 * kEps * (1.0 + std::abs(log_prefactor)) * std::abs(value);
  return {value, prefactor * omitted + rounding};
}

}  // namespace

SpecFunResult kummer_m(double a, double b, double z) {
  if (is_nonpositive_integer(b)) throw DomainError("kummer_m: b must not be zero or a negative integer");
  if (!(z >= 0.0)) throw DomainError("kummer_m: z must be non-negative");
  if (z == 0.0) return {1.0, 0.0};
  if (z <= kSeriesLimit || is_nonpositive_integer(a) || a <= 0.0 || b <= 0.0) {
    return kummer_series(a, b, z);
  }
  return kummer_asymptotic(a, b, z);
}

SpecFunResult bessel_i(double nu, double z) {
  if (!(nu >= 0.0)) throw DomainError("bessel_i: order must be non-negative");
  if (!(z >= 0.0)) throw DomainError("bessel_i: argument must be non-negative");
  if (z == 0.0) return {nu == 0.0 ? 1.0 : 0.0, 0.0};
  if (z <= kSeriesLimit) {
    const double half = 0.5 * z;
    const double q = half * half;
    double term = std::exp(nu * std::log(half) - log_gamma_fn(nu + 1.0));
    double sum = term;
    int k = 0;
    for (; k < kMaxTerms; ++k) {
      term *= q / ((k + 1.0) * (nu + k + 1.0));
      sum += term;
      if (term < kTruncation * sum) break;
    }
    return {sum, 4.0 * kEps * sum + term};
  }
  const double mu = 4.0 * nu * nu;
  double term = 1.0;
  double sum = 1.0;
  double omitted = 0.0;
  for (int k = 1; k < kMaxTerms; ++k) {
    const double odd = 2.0 * k - 1.0;
    const double next = -term * (mu - odd * odd) / (8.0 * k * z);
    if (next == 0.0) {
      omitted = 0.0;
      break;
    }
    if (std::abs(next) >= std::abs(term)) {
      omitted = std::abs(next);
      break;
    }
    sum += next;
    term = next;
    omitted = std::abs(next);
    if (std::abs(next) < kTruncation * std::abs(sum)) break;
  }
  const double prefactor = std::exp(z) / std::sqrt(2.0 * std::numbers::pi * z);
  const double value = prefactor * sum;
  return {value, prefactor * omitted + 8.0 * kEps * z * value};
}

namespace {

// exp(z) * int_0^inf exp(-z cosh s) cosh(s)^order ds by the trapezoidal rule.
double scaled_k_integral(double z, int order) {
  constexpr double h = 0.1;
  double sum = 0.5;
  for (int k = 1; k < 2000; ++k) {
    const double s = k * h;
    const double c = std::cosh(s);
    const double term = std::exp(-z * (c - 1.0)) * (order == 0 ? 1.0 : c);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return h * sum;
}

}  // namespace

SpecFunResult bessel_k0(double z) {
  if (!(z > 0.0)) throw DomainError("bessel_k0: argument must be positive");
  if (z < kBesselKSwitch) {
    const double q = 0.25 * z * z;
    double power = 1.0;  // q^k / (k!)^2
    double harmonic = 0.0;
    double i0 = 1.0;
    double tail = 0.0;
    for (int k = 1; k < kMaxTerms; ++k) {
      power *= q / (static_cast<double>(k) * k);
      harmonic += 1.0 / k;
      i0 += power;
      tail += harmonic * power;
      if (power < kTruncation * i0) break;
    }
    const double lead = -(std::log(0.5 * z) + kEulerGamma) * i0;
    const double value = lead + tail;
    return {value, 4.0 * kEps * (std::abs(lead) + tail)};
  }
  const double value = std::exp(-z) * scaled_k_integral(z, 0);
  return {value, 4.0 * kEps * value};
}

SpecFunResult bessel_k1(double z) {
  if (!(z > 0.0)) throw DomainError("bessel_k1: argument must be positive");
  if (z < kBesselKSwitch) {
    const double q = 0.25 * z * z;
    // I1(z) and sum_k [psi(k+1) + psi(k+2)] q^k / (k! (k+1)!)
    double power = 1.0;  // q^k / (k! (k+1)!)
    double psi_k1 = -kEulerGamma;       // psi(k+1)
    double psi_k2 = 1.0 - kEulerGamma;  // psi(k+2)
    double i1_sum = 1.0;
    double digamma_sum = psi_k1 + psi_k2;
    for (int k = 1; k < kMaxTerms; ++k) {
      power *= q / (static_cast<double>(k) * (k + 1.0));
      psi_k1 += 1.0 / k;
      psi_k2 += 1.0 / (k + 1.0);
      i1_sum += power;
      digamma_sum += (psi_k1 + psi_k2) * power;
      if (power < kTruncation * i1_sum) break;
    }
    const double i1 = 0.5 * z * i1_sum;
    const double a = 1.0 / z;
    const double b = std::log(0.5 * z) * i1;
    const double c = -0.25 * z * digamma_sum;
    const double value = a + b + c;
    return {value, 4.0 * kEps * (std::abs(a) + std::abs(b) + std::abs(c))};
  }
  const double value = std::exp(-z) * scaled_k_integral(z, 1);
  return {value, 4.0 * kEps * value};
}

}  // namespace stef::specfun
