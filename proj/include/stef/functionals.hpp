#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "stef/fields.hpp"

namespace stef {

/// Threshold definition for the boundary radius d*(t).
class BoundarySpec {
 public:
  enum class Mode { absolute, decay_by_epsilon, decay_to_fraction };

  /// tau(d*, t) = tau_min.
  static BoundarySpec absolute(double tau_min);
  /// tau(d*, t) = (1 - epsilon) tau(0, t).
  static BoundarySpec decay_by_epsilon(double epsilon);
  /// tau(d*, t) = p tau(0, t).
  static BoundarySpec decay_to_fraction(double p);

  Mode mode() const noexcept { return mode_; }
  double parameter() const noexcept { return param_; }
  bool relative() const noexcept { return mode_ != Mode::absolute; }

  /// Multiplier applied to tau(0, t) for the relative modes.
  double source_fraction() const noexcept;

 private:
  BoundarySpec(Mode m, double v) : mode_(m), param_(v) {}
  Mode mode_;
  double param_;
};

struct BoundaryResult {
  std::optional<double> radius;  // empty: threshold never crossed
  bool non_unique = false;       // field not monotone; radius is the first crossing
};

/// Threshold level implied by `spec` at time t.
double boundary_threshold(const Field& field, const BoundarySpec& spec, double t);

/// Smallest r with tau(r, t) equal to the threshold. The bracket starts at
/// 10 * length_scale(t) and doubles at most 2^10 times.
BoundaryResult boundary_radius(const Field& field, const BoundarySpec& spec, double t);

/// Central difference of boundary_radius with step 1e-5 t.
/// Throws NumericalError if the boundary is absent at t +- h.
double boundary_velocity(const Field& field, const BoundarySpec& spec, double t);

inline constexpr double kInfiniteHorizon = std::numeric_limits<double>::infinity();

struct ExposureResult {
  double value = 0.0;
  double abs_error = 0.0;
};

/// Phi(r) = int_{t_min}^{T} tau(r, t) dt; T may be kInfiniteHorizon.
ExposureResult cumulative_exposure(const Field& field, double r, double t_min, double t_max);

struct MomentResult {
  int k = 0;
  double value = 0.0;
  double quadrature_error = 0.0;
};

/// M_k(t) = omega_d int_0^inf r^(k+d-1) tau(r, t) dr for even k >= 0.
MomentResult spatial_moment(const Field& field, int k, double t);

/// Surface area of the unit sphere in R^d.
double unit_sphere_area(int dim);

/// E(t) = int tau^2 dx.
double energy(const Field& field, double t);

/// int |grad tau|^2 dx; -2 nu times this is dE/dt under pure diffusion.
double gradient_energy(const Field& field, double t);

enum class FieldParameter { nu, q };

using FieldFamily = std::function<Field(const FieldParams&)>;

/// d d*(t) / d param by central difference with relative step 1e-5.
double boundary_sensitivity(const FieldFamily& family, const FieldParams& params,
                            const BoundarySpec& spec, double t,
                            FieldParameter param = FieldParameter::nu);

struct WeightedPoint {
  Point pos;
  double weight = 1.0;
};

/// Population-weighted centroid sum w_i x_i / sum w_i.
Point optimal_centroid(std::span<const WeightedPoint> population);

/// Snapshot of a radial field on a strictly increasing grid.
struct RadialGrid {
  std::vector<double> r;
  std::vector<double> tau;
  int dim = 3;
};

enum class FunctionalKind { total_intensity, energy, gradient_energy, weighted_exposure };

/// First variation dF/dtau at grid node `index`:
///   total_intensity -> 1, energy -> 2 tau, gradient_energy -> -2 lap(tau),
///   weighted_exposure -> rho(r).
/// The Laplacian is the three-point radial form f'' + (d-1)/r f'.
double functional_derivative(FunctionalKind kind, const RadialGrid& grid, std::size_t index,
                             const std::function<double(double)>& weight = {});

}  // namespace stef
