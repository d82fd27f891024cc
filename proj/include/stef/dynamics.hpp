#pragma once

#include <optional>
#include <vector>

#include "stef/fields.hpp"
#include "stef/functionals.hpp"

namespace stef {

struct BoundaryTrajectory {
  enum class Termination { horizon_reached, boundary_vanished, steady_state_detected };

  std::vector<double> times;  // strictly increasing
  std::vector<double> radii;  // all > 0
  Termination terminated_reason = Termination::horizon_reached;
};

/// Right-hand side of the boundary ODE at (t, d):
///   dd*/dt = (dtheta/dt - d_t tau(d, t)) / d_r tau(d, t)
/// where theta(t) is the threshold level. For an absolute threshold
/// dtheta/dt = 0 and this reduces to -tau_t / tau_r; for relative
/// thresholds theta = c tau(0, t) moves with the source value.
/// Throws NumericalError when |tau_r| < 1e-14 |tau_t - dtheta/dt|.
double boundary_ode_rhs(const Field& field, const BoundarySpec& spec, double t, double d);

/// Fixed-step classical RK4 integration of the boundary ODE from
/// (t0, d0) to t1. Stops early with steady_state_detected once
/// |dd*/dt| t / d* < 1e-6 on 10 consecutive steps, or with
/// boundary_vanished if the radius leaves (0, inf).
BoundaryTrajectory boundary_ode_integrate(const Field& field, const BoundarySpec& spec, double d0,
                                          double t0, double t1, int steps);

/// Long-time boundary of a decaying source, l ln(q0 / (lambda l tau_min))
/// with screening length l = sqrt(nu / lambda). Empty when the logarithm's
/// argument is <= 1.
std::optional<double> steady_state_boundary(double nu, double lambda, double q0, double tau_min);

/// First-order boundary shift d0 + eps tau1 / |grad tau0|.
double perturbed_boundary(double d0_star, double tau1_at_boundary, double grad_tau0_at_boundary,
                          double eps);

struct AdiabaticBoundary {
  double exact = 0.0;        // 2 sqrt(nu0 (1 + alpha t) t ln(1 / (1 - eps)))
  double first_order = 0.0;  // d0(t) (1 + alpha t / 2)
};

/// Gaussian boundary under a slowly growing diffusion coefficient
/// nu(t) = nu0 (1 + alpha t).
AdiabaticBoundary adiabatic_boundary(double nu0, double alpha, double eps_threshold, double t);

}  // namespace stef
