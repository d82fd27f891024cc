#pragma once

// Analytic treatment-intensity fields tau(r, t) of a point source under
// pure diffusion (zero drift). Every field here is radially symmetric about
// its source, so the primary signatures take (r, t); Field::at() is the
// point-based wrapper.

#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace stef {

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Point operator*(double s, Point a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Point&, const Point&) = default;
};

inline double norm(Point p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); }

struct FieldParams {
  double nu = 1.0;      // diffusion coefficient, length^2 / time
  double q = 1.0;       // source strength, intensity * length^d
  Point source_pos{};
  double lambda = 0.0;  // source decay rate, 1 / time; 0 = sustained
  int dim = 3;

  /// Throws DomainError unless nu > 0, q > 0, lambda >= 0, dim in {2, 3}.
  void validate() const;
};

struct FieldEval {
  double value = 0.0;
  double d_dr = 0.0;  // radial derivative
  double d_dt = 0.0;  // time derivative
};

struct SourceEvent {
  Point pos{};
  double time = 0.0;
  double strength = 1.0;  // > 0
};

/// Closed-form 3D Gaussian (heat kernel) with optional source decay:
/// tau = q e^(-lambda t) (4 pi nu t)^(-3/2) exp(-r^2 / (4 nu t)).
FieldEval gaussian_field(const FieldParams& p, double r, double t);

/// Cylindrical profile tau = (A / t) K0(r / (2 sqrt(nu t))). Derivatives use
/// K0' = -K1 with K1 evaluated directly.
FieldEval bessel_field(const FieldParams& p, double amplitude, double r, double t);

struct KummerTerm {
  double coeff = 0.0;
  unsigned n = 0;
};

/// Radially reduced Kummer series tau = t^-1 sum_n C_n M(n + 1/2, 2n + 1, r^2 / (4 nu t)).
double kummer_field(std::span<const KummerTerm> coeffs, const FieldParams& p, double r, double t);

/// Same series with exact derivatives (M' = (a/b) M(a+1, b+1, z)).
FieldEval kummer_field_eval(std::span<const KummerTerm> coeffs, const FieldParams& p, double r,
                            double t);

/// Field of a sustained source whose emitted intensity decays at rate lambda:
///   tau(r, t) = q / (4 pi nu)^(3/2) int_0^t e^(-lambda u) u^(-3/2) exp(-r^2 / (4 nu u)) du
/// with u the age of the emission. Evaluated by adaptive quadrature after
/// the substitution u = v^2. For lambda t >> 1 it settles on the screened
/// (Yukawa) profile q exp(-r sqrt(lambda / nu)) / (4 pi nu r).
/// Throws NumericalError when the estimated relative error exceeds 1e-6.
double decaying_source_field(const FieldParams& p, double r, double t);

/// Value and derivatives of decaying_source_field. d_dt is closed form
/// (the integrand at u = t); d_dr is a second quadrature.
FieldEval decaying_source_field_eval(const FieldParams& p, double r, double t);

/// Limit of decaying_source_field as t -> inf.
double yukawa_steady_field(const FieldParams& p, double r);

/// Free-space 3D Green's function of the diffusion operator for a unit
/// impulse at (y, s). Zero for t <= s.
double greens_eval(Point x, double t, Point y, double s, double nu);

/// Linear superposition of impulse responses.
double superpose(std::span<const SourceEvent> events, double nu, Point x, double t);

/// Type-erased radially symmetric field with value semantics.
///
/// `length_scale(t)` is a characteristic radius used to seed bracketing
/// searches and quadrature panels (sqrt(nu t) for diffusive fields).
class Field {
 public:
  using Evaluator = std::function<FieldEval(double r, double t)>;
  using Scale = std::function<double(double t)>;

  Field(int dim, Evaluator eval, Scale length_scale)
      : dim_(dim), eval_(std::move(eval)), scale_(std::move(length_scale)) {}

  FieldEval operator()(double r, double t) const { return eval_(r, t); }
  double value(double r, double t) const { return eval_(r, t).value; }
  FieldEval at(Point x, double t) const { return eval_(norm(x - origin_), t); }

  int dim() const noexcept { return dim_; }
  double length_scale(double t) const { return scale_(t); }

  Field& with_origin(Point origin) {
    origin_ = origin;
    return *this;
  }

 private:
  int dim_;
  Evaluator eval_;
  Scale scale_;
  Point origin_{};
};

Field make_gaussian(const FieldParams& p);
Field make_bessel(const FieldParams& p, double amplitude);
Field make_kummer(std::vector<KummerTerm> coeffs, const FieldParams& p);
Field make_decaying_source(const FieldParams& p);
Field make_yukawa_steady(const FieldParams& p);

/// Time-independent exponential profile amplitude * exp(-kappa r), the
/// shape assumed by the log-linear decay regression.
Field make_exponential_profile(double amplitude, double kappa, int dim = 3);

/// Spatially and temporally constant field.
Field make_constant(double value, int dim = 3);

}  // namespace stef
