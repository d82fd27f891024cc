#include "stef/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "stef/errors.hpp"
#include "stef/quadrature.hpp"
#include "stef/specfun.hpp"

namespace stef {

BoundarySpec BoundarySpec::absolute(double tau_min) {
  if (!(tau_min > 0.0)) throw DomainError("BoundarySpec: tau_min must be positive");
  return {Mode::absolute, tau_min};
}

BoundarySpec BoundarySpec::decay_by_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("BoundarySpec: epsilon must lie in (0, 1)");
  return {Mode::decay_by_epsilon, epsilon};
}

BoundarySpec BoundarySpec::decay_to_fraction(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("BoundarySpec: fraction must lie in (0, 1)");
  return {Mode::decay_to_fraction, p};
}

double BoundarySpec::source_fraction() const noexcept {
  switch (mode_) {
    case Mode::decay_by_epsilon:
      return 1.0 - param_;
    case Mode::decay_to_fraction:
      return param_;
    case Mode::absolute:
      break;
  }
  return 0.0;
}

double boundary_threshold(const Field& field, const BoundarySpec& spec, double t) {
  if (!spec.relative()) return spec.parameter();
  const double at_source = field.value(0.0, t);
  if (!std::isfinite(at_source)) {
    throw DomainError("boundary_threshold: relative threshold needs a finite source value");
  }
  return spec.source_fraction() * at_source;
}

namespace {

constexpr int kMaxDoublings = 10;
constexpr int kScanPoints = 256;

// Field value with a singular source treated as +inf.
double value_or_inf(const Field& field, double r, double t) {
  try {
    const double v = field.value(r, t);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  } catch (const DomainError&) {
    if (r == 0.0) return std::numeric_limits<double>::infinity();
    throw;
  }
}

}  // namespace

BoundaryResult boundary_radius(const Field& field, const BoundarySpec& spec, double t) {
  if (!(t > 0.0)) throw DomainError("boundary_radius: time must be positive");
  const double threshold = boundary_threshold(field, spec, t);
  BoundaryResult out;
  if (value_or_inf(field, 0.0, t) <= threshold) return out;

  double hi = 10.0 * field.length_scale(t);
  int doublings = 0;
  while (field.value(hi, t) > threshold && doublings < kMaxDoublings) {
    hi *= 2.0;
    ++doublings;
  }
  if (field.value(hi, t) > threshold) return out;

  // Scan for the first crossing and check monotonicity on the way.
  double prev_r = 0.0;
  double prev_v = value_or_inf(field, 0.0, t);
  double lo = 0.0;
  double up = hi;
  bool found = false;
  for (int i = 1; i <= kScanPoints; ++i) {
    const double r = hi * i / kScanPoints;
    const double v = field.value(r, t);
    if (v > prev_v * (1.0 + 1e-12) && std::isfinite(prev_v)) out.non_unique = true;
    if (!found && v <= threshold) {
      lo = prev_r;
      up = r;
      found = true;
    }
    prev_r = r;
    prev_v = v;
  }
  if (!found) return out;

  auto above = [&](double r) { return value_or_inf(field, r, t) > threshold; };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + up);
    if (!(mid > lo && mid < up)) break;
    (above(mid) ? lo : up) = mid;
  }
  out.radius = 0.5 * (lo + up);
  return out;
}

double boundary_velocity(const Field& field, const BoundarySpec& spec, double t) {
  if (!(t > 0.0)) throw DomainError("boundary_velocity: time must be positive");
  const double h = 1e-5 * t;
  const auto ahead = boundary_radius(field, spec, t + h).radius;
  const auto behind = boundary_radius(field, spec, t - h).radius;
  if (!ahead || !behind) throw NumericalError("boundary_velocity: boundary not differentiable here");
  return (*ahead - *behind) / (2.0 * h);
}

namespace {

quad::Options tight() {
  quad::Options o;
  o.abs_tol = 1e-300;
  o.rel_tol = 1e-11;
  o.max_intervals = 4000;
  return o;
}

void require_converged(const quad::Result& res, const char* who) {
  if (!res.converged) {
    std::ostringstream msg;
    msg << who << ": quadrature did not converge (estimate=" << res.value
        << ", abs_error=" << res.abs_error << ", evaluations=" << res.evaluations << ")";
    throw NumericalError(msg.str());
  }
}

// omega_d int_0^inf g(r, tau(r, t)) dr over panels of ten length scales,
// stopping once a panel adds less than 1e-14 of the running total.
template <class G>
quad::Result radial_integral(const Field& field, double t, G g, const char* who) {
  const double panel = 10.0 * field.length_scale(t);
  quad::Result total;
  total.converged = true;
  for (int i = 0; i < 400; ++i) {
    auto f = [&](double r) { return g(r, field(r, t)); };
    const auto res = quad::integrate(f, i * panel, (i + 1) * panel, tight());
    require_converged(res, who);
    total.value += res.value;
    total.abs_error += res.abs_error;
    total.evaluations += res.evaluations;
    if (i >= 1 && std::abs(res.value) <= 1e-14 * std::abs(total.value)) {
      const double w = unit_sphere_area(field.dim());
      total.value *= w;
      total.abs_error *= w;
      return total;
    }
  }
  throw NumericalError(std::string(who) + ": radial integral did not settle within 400 panels");
}

}  // namespace

double unit_sphere_area(int dim) {
  if (dim < 1) throw DomainError("unit_sphere_area: dimension must be positive");
  return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / specfun::gamma_fn(0.5 * dim);
}

ExposureResult cumulative_exposure(const Field& field, double r, double t_min, double t_max) {
  if (!(r > 0.0)) throw DomainError("cumulative_exposure: r must be positive (divergent at the source)");
  if (!(t_min >= 0.0) || !(t_max >= t_min)) throw DomainError("cumulative_exposure: need 0 <= t_min <= T");
  if (t_min == t_max) return {};

  auto at = [&](double t) { return t > 0.0 ? field.value(r, t) : 0.0; };
  // Past the arrival time r^2 / nu the field is in its power-law tail.
  const double unit_scale = field.length_scale(1.0);
  const double split = std::max(t_min, std::min(t_max, r * r / (unit_scale * unit_scale)));

  ExposureResult out;
  if (split > t_min) {
    const auto head = quad::integrate(at, t_min, split, tight());
    require_converged(head, "cumulative_exposure");
    out.value += head.value;
    out.abs_error += head.abs_error;
  }
  if (t_max > split) {
    quad::Result tail;
    if (std::isinf(t_max)) {
      // t = 1 / u^2 turns a t^(-3/2) tail into a bounded integrand.
      auto mapped = [&](double u) {
        if (u <= 0.0) return 0.0;
        return at(1.0 / (u * u)) * 2.0 / (u * u * u);
      };
      tail = quad::integrate(mapped, 0.0, 1.0 / std::sqrt(split), tight());
    } else {
      tail = quad::integrate(at, split, t_max, tight());
    }
    require_converged(tail, "cumulative_exposure");
    out.value += tail.value;
    out.abs_error += tail.abs_error;
  }
  return out;
}

MomentResult spatial_moment(const Field& field, int k, double t) {
  if (k < 0 || k % 2 != 0) throw DomainError("spatial_moment: k must be an even non-negative integer");
  if (!(t > 0.0)) throw DomainError("spatial_moment: time must be positive");
  const int power = k + field.dim() - 1;
  const auto res = radial_integral(
      field, t, [power](double r, const FieldEval& e) { return std::pow(r, power) * e.value; },
      "spatial_moment");
  return {k, res.value, res.abs_error};
}

double energy(const Field& field, double t) {
  if (!(t > 0.0)) throw DomainError("energy: time must be positive");
  const int power = field.dim() - 1;
  return radial_integral(
             field, t,
             [power](double r, const FieldEval& e) { return std::pow(r, power) * e.value * e.value; },
             "energy")
      .value;
}

double gradient_energy(const Field& field, double t) {
  if (!(t > 0.0)) throw DomainError("gradient_energy: time must be positive");
  const int power = field.dim() - 1;
  return radial_integral(
             field, t,
             [power](double r, const FieldEval& e) { return std::pow(r, power) * e.d_dr * e.d_dr; },
             "gradient_energy")
      .value;
}

double boundary_sensitivity(const FieldFamily& family, const FieldParams& params,
                            const BoundarySpec& spec, double t, FieldParameter param) {
  auto slot = [param](FieldParams& p) -> double& { return param == FieldParameter::nu ? p.nu : p.q; };
  FieldParams up = params;
  FieldParams down = params;
  const double base = slot(up);
  const double h = 1e-5 * base;
  slot(up) = base + h;
  slot(down) = base - h;
  const auto d_up = boundary_radius(family(up), spec, t).radius;
  const auto d_down = boundary_radius(family(down), spec, t).radius;
  if (!d_up || !d_down) throw NumericalError("boundary_sensitivity: boundary absent");
  return (*d_up - *d_down) / (2.0 * h);
}

Point optimal_centroid(std::span<const WeightedPoint> population) {
  if (population.empty()) throw DomainError("optimal_centroid: empty population");
  Point acc{};
  double total = 0.0;
  for (const auto& wp : population) {
    if (!(wp.weight > 0.0)) throw DomainError("optimal_centroid: weights must be positive");
    acc = acc + wp.weight * wp.pos;
    total += wp.weight;
  }
  return (1.0 / total) * acc;
}

double functional_derivative(FunctionalKind kind, const RadialGrid& grid, std::size_t index,
                             const std::function<double(double)>& weight) {
  if (grid.r.size() != grid.tau.size()) throw DomainError("functional_derivative: grid size mismatch");
  if (grid.r.size() < 200) throw DomainError("functional_derivative: grid needs at least 200 nodes");
  if (index >= grid.r.size()) throw DomainError("functional_derivative: index out of range");
  switch (kind) {
    case FunctionalKind::total_intensity:
      return 1.0;
    case FunctionalKind::energy:
      return 2.0 * grid.tau[index];
    case FunctionalKind::weighted_exposure:
      if (!weight) throw DomainError("functional_derivative: weighted_exposure needs a weight");
      return weight(grid.r[index]);
    case FunctionalKind::gradient_energy: {
      if (index == 0 || index + 1 == grid.r.size()) {
        throw DomainError("functional_derivative: Laplacian stencil incomplete at grid boundary");
      }
      const double h1 = grid.r[index] - grid.r[index - 1];
      const double h2 = grid.r[index + 1] - grid.r[index];
      if (!(h1 > 0.0 && h2 > 0.0)) throw DomainError("functional_derivative: grid must be increasing");
      const double fm = grid.tau[index - 1];
      const double f0 = grid.tau[index];
      const double fp = grid.tau[index + 1];
      const double second = 2.0 * (fm / (h1 * (h1 + h2)) - f0 / (h1 * h2) + fp / (h2 * (h1 + h2)));
      const double first =
          -h2 / (h1 * (h1 + h2)) * fm + (h2 - h1) / (h1 * h2) * f0 + h1 / (h2 * (h1 + h2)) * fp;
      const double laplacian = second + (grid.dim - 1) / grid.r[index] * first;
      return -2.0 * laplacian;
    }
  }
  return 0.0;
}

}  // namespace stef
