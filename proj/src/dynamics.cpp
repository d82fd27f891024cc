#include "stef/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "stef/errors.hpp"

namespace stef {

double boundary_ode_rhs(const Field& field, const BoundarySpec& spec, double t, double d) {
  const FieldEval at = field(d, t);
  double threshold_rate = 0.0;
  if (spec.relative()) threshold_rate = spec.source_fraction() * field(0.0, t).d_dt;
  const double numerator = threshold_rate - at.d_dt;
  if (at.d_dr == 0.0 || !(std::abs(at.d_dr) >= 1e-14 * std::abs(numerator))) {
    std::ostringstream msg;
    msg << "boundary_ode: singular radial gradient at t=" << t << ", d=" << d
        << " (d_dr=" << at.d_dr << ", d_dt=" << at.d_dt << ")";
    throw NumericalError(msg.str());
  }
  return numerator / at.d_dr;
}

BoundaryTrajectory boundary_ode_integrate(const Field& field, const BoundarySpec& spec, double d0,
                                          double t0, double t1, int steps) {
  if (!(d0 > 0.0)) throw DomainError("boundary_ode_integrate: d0 must be positive");
  if (!(t0 > 0.0) || !(t1 > t0)) throw DomainError("boundary_ode_integrate: need 0 < t0 < t1");
  if (steps <= 0) throw DomainError("boundary_ode_integrate: steps must be positive");

  constexpr double kStallTolerance = 1e-6;
  constexpr int kStallSteps = 10;

  BoundaryTrajectory traj;
  traj.times.reserve(static_cast<std::size_t>(steps) + 1);
  traj.radii.reserve(static_cast<std::size_t>(steps) + 1);
  traj.times.push_back(t0);
  traj.radii.push_back(d0);

  // Stage states outside (0, inf) mean the boundary is collapsing onto the source.
  struct Vanished {};
  auto f = [&](double t, double d) {
    if (!(d > 0.0) || !std::isfinite(d)) throw Vanished{};
    return boundary_ode_rhs(field, spec, t, d);
  };
  const double h = (t1 - t0) / steps;
  double t = t0;
  double d = d0;
  int stalled = 0;
  for (int i = 0; i < steps; ++i) {
    double next = 0.0;
    try {
      const double k1 = f(t, d);
      const double k2 = f(t + 0.5 * h, d + 0.5 * h * k1);
      const double k3 = f(t + 0.5 * h, d + 0.5 * h * k2);
      const double k4 = f(t + h, d + h * k3);
      next = d + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } catch (const Vanished&) {
      traj.terminated_reason = BoundaryTrajectory::Termination::boundary_vanished;
      return traj;
    }
    // Recompute t from the step index so the last node lands on t1 exactly.
    const double t_next = (i + 1 == steps) ? t1 : t0 + (i + 1) * h;
    if (!(next > 0.0) || !std::isfinite(next)) {
      traj.terminated_reason = BoundaryTrajectory::Termination::boundary_vanished;
      return traj;
    }
    t = t_next;
    d = next;
    traj.times.push_back(t);
    traj.radii.push_back(d);

    const double rate = std::abs(f(t, d)) * t / d;
    stalled = rate < kStallTolerance ? stalled + 1 : 0;
    if (stalled >= kStallSteps) {
      traj.terminated_reason = BoundaryTrajectory::Termination::steady_state_detected;
      return traj;
    }
  }
  return traj;
}

std::optional<double> steady_state_boundary(double nu, double lambda, double q0, double tau_min) {
  if (!(nu > 0.0) || !(lambda > 0.0) || !(q0 > 0.0) || !(tau_min > 0.0)) {
    throw DomainError("steady_state_boundary: nu, lambda, q0, tau_min must be positive");
  }
  const double screening = std::sqrt(nu / lambda);
  const double argument = q0 / (lambda * screening * tau_min);
  if (!(argument > 1.0)) return std::nullopt;
  return screening * std::log(argument);
}

double perturbed_boundary(double d0_star, double tau1_at_boundary, double grad_tau0_at_boundary,
                          double eps) {
  if (!(grad_tau0_at_boundary > 0.0)) {
    throw DomainError("perturbed_boundary: unperturbed gradient must be non-zero");
  }
  return d0_star + eps * tau1_at_boundary / grad_tau0_at_boundary;
}

AdiabaticBoundary adiabatic_boundary(double nu0, double alpha, double eps_threshold, double t) {
  if (!(nu0 > 0.0)) throw DomainError("adiabatic_boundary: nu0 must be positive");
  if (!(alpha >= 0.0)) throw DomainError("adiabatic_boundary: alpha must be non-negative");
  if (!(eps_threshold > 0.0 && eps_threshold < 1.0)) {
    throw DomainError("adiabatic_boundary: threshold fraction must lie in (0, 1)");
  }
  if (!(t > 0.0)) throw DomainError("adiabatic_boundary: time must be positive");
  const double log_term = std::log(1.0 / (1.0 - eps_threshold));
  const double static_boundary = 2.0 * std::sqrt(nu0 * t * log_term);
  return {2.0 * std::sqrt(nu0 * (1.0 + alpha * t) * t * log_term),
          static_boundary * (1.0 + 0.5 * alpha * t)};
}

}  // namespace stef
