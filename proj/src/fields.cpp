#include "stef/fields.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "stef/errors.hpp"
#include "stef/quadrature.hpp"
#include "stef/specfun.hpp"

namespace stef {
namespace {

constexpr double kPi = std::numbers::pi;

void require_positive_time(double t, const char* who) {
  if (!(t > 0.0)) throw DomainError(std::string(who) + ": time must be positive");
}

double diffusive_scale(double nu, double t) { return std::sqrt(nu * t); }

}  // namespace

void FieldParams::validate() const {
  if (!(nu > 0.0)) throw DomainError("FieldParams: nu must be positive");
  if (!(q > 0.0)) throw DomainError("FieldParams: q must be positive");
  if (!(lambda >= 0.0)) throw DomainError("FieldParams: lambda must be non-negative");
  if (dim != 2 && dim != 3) throw DomainError("FieldParams: dim must be 2 or 3");
}

FieldEval gaussian_field(const FieldParams& p, double r, double t) {
  p.validate();
  if (p.dim != 3) throw DomainError("gaussian_field: requires dim = 3");
  require_positive_time(t, "gaussian_field");
  if (!(r >= 0.0)) throw DomainError("gaussian_field: radius must be non-negative");
  const double four_nu_t = 4.0 * p.nu * t;
  const double value =
      p.q * std::exp(-p.lambda * t - r * r / four_nu_t) / std::pow(kPi * four_nu_t, 1.5);
  return {value, -r / (2.0 * p.nu * t) * value,
          value * (-p.lambda - 1.5 / t + r * r / (4.0 * p.nu * t * t))};
}

FieldEval bessel_field(const FieldParams& p, double amplitude, double r, double t) {
  p.validate();
  if (!(amplitude > 0.0)) throw DomainError("bessel_field: amplitude must be positive");
  if (!(r > 0.0)) throw DomainError("bessel_field: radius must be positive (K0 is singular at 0)");
  require_positive_time(t, "bessel_field");
  const double width = 2.0 * std::sqrt(p.nu * t);
  const double z = r / width;
  const double k0 = specfun::bessel_k0(z).value;
  const double k1 = specfun::bessel_k1(z).value;
  const double value = amplitude / t * k0;
  // dz/dr = 1 / width, dz/dt = -z / (2t)
  return {value, -amplitude / t * k1 / width, -value / t + amplitude / t * k1 * z / (2.0 * t)};
}

FieldEval kummer_field_eval(std::span<const KummerTerm> coeffs, const FieldParams& p, double r,
                            double t) {
  p.validate();
  require_positive_time(t, "kummer_field");
  if (!(r >= 0.0)) throw DomainError("kummer_field: radius must be non-negative");
  const double z = r * r / (4.0 * p.nu * t);
  double sum = 0.0;
  double dsum = 0.0;
  for (const auto& term : coeffs) {
    const double a = term.n + 0.5;
    const double b = 2.0 * term.n + 1.0;
    sum += term.coeff * specfun::kummer_m(a, b, z).value;
    dsum += term.coeff * (a / b) * specfun::kummer_m(a + 1.0, b + 1.0, z).value;
  }
  const double value = sum / t;
  const double dz_dr = r / (2.0 * p.nu * t);
  const double dz_dt = -z / t;
  return {value, dsum * dz_dr / t, -value / t + dsum * dz_dt / t};
}

double kummer_field(std::span<const KummerTerm> coeffs, const FieldParams& p, double r, double t) {
  p.validate();
  require_positive_time(t, "kummer_field");
  if (!(r >= 0.0)) throw DomainError("kummer_field: radius must be non-negative");
  const double z = r * r / (4.0 * p.nu * t);
  double sum = 0.0;
  for (const auto& term : coeffs) {
    sum += term.coeff * specfun::kummer_m(term.n + 0.5, 2.0 * term.n + 1.0, z).value;
  }
  return sum / t;
}

namespace {

void check_decaying_args(const FieldParams& p, double r, double t) {
  p.validate();
  if (!(p.lambda > 0.0)) throw DomainError("decaying_source_field: lambda must be positive");
  if (!(r > 0.0)) throw DomainError("decaying_source_field: radius must be positive");
  require_positive_time(t, "decaying_source_field");
}

// Integrates the emission-age kernel in v = sqrt(u), multiplied by
// weight(u) (1 for the value, -r / (2 nu u) for the radial derivative).
template <class Weight>
double decaying_quadrature(const FieldParams& p, double r, double t, Weight weight,
                           const char* what) {
  const double r2 = r * r / (4.0 * p.nu);
  auto integrand = [&](double v) {
    if (v <= 0.0) return 0.0;
    const double u = v * v;
    const double e = std::exp(-p.lambda * u - r2 / u);
    return e == 0.0 ? 0.0 : 2.0 * e / u * weight(u);
  };
  quad::Options opts;
  opts.abs_tol = 1e-300;
  opts.rel_tol = 1e-10;
  const double upper = std::sqrt(t);
  // The integrand peaks near v = sqrt(r2) and is negligible long before
  // e^(-lambda u) has decayed by 1e-30; splitting there keeps the
  // adaptive scheme from sampling an essentially empty tail.
  const double tail = std::sqrt(70.0 / p.lambda);
  quad::Result res;
  if (tail < upper) {
    auto head = quad::integrate(integrand, 0.0, tail, opts);
    auto rest = quad::integrate(integrand, tail, upper, opts);
    res = {head.value + rest.value, head.abs_error + rest.abs_error,
           head.evaluations + rest.evaluations, head.converged && rest.converged};
  } else {
    res = quad::integrate(integrand, 0.0, upper, opts);
  }
  const double scale = p.q / std::pow(4.0 * kPi * p.nu, 1.5);
  if (!std::isfinite(res.value) || res.abs_error > 1e-6 * std::abs(res.value)) {
    std::ostringstream msg;
    msg << "decaying_source_field: " << what << " quadrature did not converge (r=" << r
        << ", t=" << t << ", estimate=" << res.value << ", abs_error=" << res.abs_error
        << ", evaluations=" << res.evaluations << ")";
    throw NumericalError(msg.str());
  }
  return scale * res.value;
}

}  // namespace

double decaying_source_field(const FieldParams& p, double r, double t) {
  check_decaying_args(p, r, t);
  return decaying_quadrature(p, r, t, [](double) { return 1.0; }, "value");
}

FieldEval decaying_source_field_eval(const FieldParams& p, double r, double t) {
  check_decaying_args(p, r, t);
  const double value = decaying_quadrature(p, r, t, [](double) { return 1.0; }, "value");
  const double d_dr = decaying_quadrature(
      p, r, t, [&](double u) { return -r / (2.0 * p.nu * u); }, "radial derivative");
  const double d_dt = p.q / std::pow(4.0 * kPi * p.nu, 1.5) * std::exp(-p.lambda * t) *
                      std::pow(t, -1.5) * std::exp(-r * r / (4.0 * p.nu * t));
  return {value, d_dr, d_dt};
}

double yukawa_steady_field(const FieldParams& p, double r) {
  p.validate();
  if (!(p.lambda > 0.0)) throw DomainError("yukawa_steady_field: lambda must be positive");
  if (!(r > 0.0)) throw DomainError("yukawa_steady_field: radius must be positive");
  return p.q * std::exp(-r * std::sqrt(p.lambda / p.nu)) / (4.0 * kPi * p.nu * r);
}

double greens_eval(Point x, double t, Point y, double s, double nu) {
  if (!(nu > 0.0)) throw DomainError("greens_eval: nu must be positive");
  if (t <= s) return 0.0;
  const double four_nu_dt = 4.0 * nu * (t - s);
  const double r = norm(x - y);
  return std::exp(-r * r / four_nu_dt) / std::pow(kPi * four_nu_dt, 1.5);
}

double superpose(std::span<const SourceEvent> events, double nu, Point x, double t) {
  double total = 0.0;
  for (const auto& e : events) total += e.strength * greens_eval(x, t, e.pos, e.time, nu);
  return total;
}

Field make_gaussian(const FieldParams& p) {
  p.validate();
  if (p.dim != 3) throw DomainError("make_gaussian: requires dim = 3");
  Field f(3, [p](double r, double t) { return gaussian_field(p, r, t); },
          [nu = p.nu](double t) { return diffusive_scale(nu, t); });
  f.with_origin(p.source_pos);
  return f;
}

Field make_bessel(const FieldParams& p, double amplitude) {
  p.validate();
  Field f(2, [p, amplitude](double r, double t) { return bessel_field(p, amplitude, r, t); },
          [nu = p.nu](double t) { return diffusive_scale(nu, t); });
  f.with_origin(p.source_pos);
  return f;
}

Field make_kummer(std::vector<KummerTerm> coeffs, const FieldParams& p) {
  p.validate();
  Field f(p.dim,
          [coeffs = std::move(coeffs), p](double r, double t) {
            return kummer_field_eval(coeffs, p, r, t);
          },
          [nu = p.nu](double t) { return diffusive_scale(nu, t); });
  f.with_origin(p.source_pos);
  return f;
}

Field make_decaying_source(const FieldParams& p) {
  p.validate();
  if (!(p.lambda > 0.0)) throw DomainError("make_decaying_source: lambda must be positive");
  Field f(3, [p](double r, double t) { return decaying_source_field_eval(p, r, t); },
          [p](double t) { return std::sqrt(p.nu * std::min(t, 1.0 / p.lambda)); });
  f.with_origin(p.source_pos);
  return f;
}

Field make_yukawa_steady(const FieldParams& p) {
  p.validate();
  if (!(p.lambda > 0.0)) throw DomainError("make_yukawa_steady: lambda must be positive");
  const double inv_len = std::sqrt(p.lambda / p.nu);
  Field f(3,
          [p, inv_len](double r, double) {
            const double v = yukawa_steady_field(p, r);
            return FieldEval{v, -v * (1.0 / r + inv_len), 0.0};
          },
          [inv_len](double) { return 1.0 / inv_len; });
  f.with_origin(p.source_pos);
  return f;
}

Field make_exponential_profile(double amplitude, double kappa, int dim) {
  if (!(amplitude > 0.0)) throw DomainError("make_exponential_profile: amplitude must be positive");
  return Field(
      dim,
      [amplitude, kappa](double r, double) {
        const double v = amplitude * std::exp(-kappa * r);
        return FieldEval{v, -kappa * v, 0.0};
      },
      [kappa](double) { return kappa > 0.0 ? 1.0 / kappa : 1.0; });
}

Field make_constant(double value, int dim) {
  return Field(
      dim, [value](double, double) { return FieldEval{value, 0.0, 0.0}; },
      [](double) { return 1.0; });
}

}  // namespace stef
