#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/hypergeometric_1F1.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "stef/errors.hpp"
#include "stef/fields.hpp"

using namespace stef;
using doctest::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

FieldParams unit3d() { return FieldParams{1.0, 1.0, {}, 0.0, 3}; }

// Sustained unit source: int_0^t G(r, u) du = erfc(r / (2 sqrt(nu t))) / (4 pi nu r).
double sustained_closed_form(double nu, double r, double t) {
  return std::erfc(r / (2.0 * std::sqrt(nu * t))) / (4.0 * kPi * nu * r);
}

}  // namespace

TEST_CASE("gaussian_field closed form values") {
  const auto p = unit3d();
  const auto at0 = gaussian_field(p, 0.0, 1.0);
  CHECK(at0.value == Approx(0.022448390265645820211).epsilon(1e-13));  // (4 pi)^(-3/2)
  CHECK(at0.d_dr == 0.0);
  CHECK(gaussian_field(p, 2.0, 1.0).value == Approx(0.0082583012661242299865).epsilon(1e-13));
  CHECK_THROWS_AS(gaussian_field(p, 1.0, 0.0), DomainError);
  CHECK_THROWS_AS(gaussian_field(p, 1.0, -2.0), DomainError);
  auto p2 = p;
  p2.dim = 2;
  CHECK_THROWS_AS(gaussian_field(p2, 1.0, 1.0), DomainError);
  auto bad = p;
  bad.nu = 0.0;
  CHECK_THROWS_AS(gaussian_field(bad, 1.0, 1.0), DomainError);
}

TEST_CASE("gaussian_field satisfies the diffusion equation") {
  // d2 tau/dr2 is a central difference (step 1e-5 r) of the analytic radial
  // derivative; d tau/dr a central difference of the value.
  for (double nu : {0.5, 1.0, 2.0}) {
    FieldParams p{nu, 1.7, {}, 0.0, 3};
    for (double t : {0.5, 1.0, 3.0, 10.0}) {
      for (double r = 0.1; r <= 5.0; r += 0.35) {
        const double h = 1e-5 * r;
        const double second =
            (gaussian_field(p, r + h, t).d_dr - gaussian_field(p, r - h, t).d_dr) / (2 * h);
        const double first =
            (gaussian_field(p, r + h, t).value - gaussian_field(p, r - h, t).value) / (2 * h);
        const double lap = second + 2.0 / r * first;
        const double dt = gaussian_field(p, r, t).d_dt;
        CHECK(std::abs(dt - nu * lap) <= 1e-5 * std::abs(gaussian_field(p, r, t).value / t) +
                                              1e-5 * std::abs(dt));
      }
    }
  }
}

TEST_CASE("gaussian_field conserves mass") {
  const FieldParams p{1.3, 2.5, {}, 0.0, 3};
  boost::math::quadrature::exp_sinh<double> integrator;
  for (double t : {0.5, 1.0, 4.0}) {
    const double mass = integrator.integrate(
        [&](double r) { return 4 * kPi * r * r * gaussian_field(p, r, t).value; });
    CHECK(rel_err(mass, p.q) < 1e-6);
  }
}

TEST_CASE("gaussian_field is self-similar") {
  const auto p = unit3d();
  for (double xi : {0.0, 0.3, 1.0, 2.2}) {
    const double ref = gaussian_field(p, xi, 1.0).value;
    for (double t : {0.1, 0.7, 5.0, 40.0}) {
      CHECK(rel_err(std::pow(t, 1.5) * gaussian_field(p, xi * std::sqrt(t), t).value, ref) < 1e-10);
    }
  }
}

TEST_CASE("gaussian_field with source decay") {
  FieldParams p = unit3d();
  p.lambda = 0.4;
  const auto e = gaussian_field(p, 1.2, 2.0);
  CHECK(e.value == Approx(std::exp(-0.8) * gaussian_field(unit3d(), 1.2, 2.0).value).epsilon(1e-14));
  CHECK(e.d_dt == Approx(e.value * (-0.4 - 0.75 + 1.44 / 16.0)).epsilon(1e-13));
}

namespace {

void check_derivatives(const Field& f, double r, double t, double tol) {
  const double hr = 1e-5 * r;
  const double ht = 1e-5 * t;
  const auto e = f(r, t);
  const double d_dr = (f.value(r + hr, t) - f.value(r - hr, t)) / (2 * hr);
  const double d_dt = (f.value(r, t + ht) - f.value(r, t - ht)) / (2 * ht);
  const double scale_r = std::max(std::abs(e.d_dr), std::abs(e.value) / r * 1e-3);
  const double scale_t = std::max(std::abs(e.d_dt), std::abs(e.value) / t * 1e-3);
  CHECK(std::abs(e.d_dr - d_dr) <= tol * scale_r);
  CHECK(std::abs(e.d_dt - d_dt) <= tol * scale_t);
}

}  // namespace

TEST_CASE("derivatives agree with central differences") {
  const auto gauss = make_gaussian({0.8, 1.0, {}, 0.2, 3});
  const auto bessel = make_bessel({1.1, 1.0, {}, 0.0, 2}, 2.0);
  const std::vector<KummerTerm> terms{{1.0, 0}, {0.3, 1}, {-0.05, 2}};
  const auto kummer = make_kummer(terms, {0.9, 1.0, {}, 0.0, 3});
  for (double r : {0.2, 0.7, 1.5, 3.0}) {
    for (double t : {0.5, 1.0, 2.5}) {
      check_derivatives(gauss, r, t, 1e-6);
      check_derivatives(bessel, r, t, 1e-6);
      check_derivatives(kummer, r, t, 1e-6);
    }
  }
  // d_dr of the decaying source is itself a quadrature (rel. tol 1e-10), so
  // differencing it with a 1e-5 step carries ~1e-5 noise.
  const auto decaying = make_decaying_source({1.0, 1.0, {}, 0.5, 3});
  for (double r : {0.5, 1.0, 2.0}) {
    for (double t : {0.7, 3.0}) check_derivatives(decaying, r, t, 1e-5);
  }
}

TEST_CASE("bessel_field values") {
  const FieldParams p{1.0, 1.0, {}, 0.0, 2};
  CHECK(bessel_field(p, 1.0, 2.0, 1.0).value == Approx(0.42102443824070833334).epsilon(1e-12));
  CHECK(bessel_field(p, 1.0, 2.0, 4.0).value == Approx(0.92441907122766586178 / 4).epsilon(1e-12));
  for (double r : {1e-4, 0.1, 1.0, 10.0, 60.0}) {
    const auto e = bessel_field(p, 3.0, r, 2.0);
    CHECK(e.value > 0.0);
    CHECK(e.d_dr <= 0.0);
  }
  CHECK_THROWS_AS(bessel_field(p, 1.0, 0.0, 1.0), DomainError);
  CHECK_THROWS_AS(bessel_field(p, 1.0, 1.0, 0.0), DomainError);
}

TEST_CASE("kummer_field values") {
  const auto p = unit3d();
  CHECK(kummer_field({}, p, 1.0, 1.0) == 0.0);
  const std::vector<KummerTerm> single{{1.0, 0}};
  CHECK(kummer_field(single, p, 0.0, 1.0) == 1.0);
  CHECK(kummer_field(single, p, 2.0, 1.0) == Approx(1.7533876543770903957).epsilon(1e-12));
  CHECK_THROWS_AS(kummer_field(single, p, 1.0, 0.0), DomainError);
}

TEST_CASE("single-term kummer_field is an exponentially scaled I0") {
  // M(1/2, 1, z) = e^(z/2) I0(z/2), z = r^2 / (4 nu t).
  const FieldParams p{0.7, 1.0, {}, 0.0, 3};
  const std::vector<KummerTerm> single{{2.5, 0}};
  for (double r : {0.1, 1.0, 3.0}) {
    for (double t : {0.5, 2.0}) {
      const double z = r * r / (4 * p.nu * t);
      const double want = 2.5 / t * std::exp(z / 2) * boost::math::cyl_bessel_i(0, z / 2);
      CHECK(rel_err(kummer_field(single, p, r, t), want) < 1e-10);
    }
  }
}

TEST_CASE("decaying_source_field reduces to the sustained source as lambda -> 0") {
  const FieldParams p{1.0, 1.0, {}, 1e-8, 3};
  for (double r : {0.3, 1.0, 2.0}) {
    CHECK(rel_err(decaying_source_field(p, r, 1.0), sustained_closed_form(1.0, r, 1.0)) < 1e-4);
  }
}

TEST_CASE("decaying_source_field settles on the screened profile") {
  const FieldParams p{1.0, 1.0, {}, 1.0, 3};
  for (double r : {0.5, 1.0, 3.0}) {
    const double t1 = 25.0;  // lambda t1 > 20
    const double a = decaying_source_field(p, r, t1);
    const double b = decaying_source_field(p, r, 80.0);
    CHECK(std::abs(b - a) / a < 0.01);
    CHECK(rel_err(b, yukawa_steady_field(p, r)) < 1e-6);
  }
  // Log-slope of r tau between two radii well beyond the screening length.
  const double r1 = 5.0;
  const double r2 = 10.0;
  const double t = 80.0;
  const double slope = std::log(r1 * decaying_source_field(p, r1, t) / (r2 * decaying_source_field(p, r2, t)));
  CHECK(rel_err(slope, (r2 - r1) * std::sqrt(p.lambda / p.nu)) < 0.02);
}

TEST_CASE("decaying_source_field argument checks") {
  const FieldParams p{1.0, 1.0, {}, 1.0, 3};
  CHECK_THROWS_AS(decaying_source_field(p, 0.0, 1.0), DomainError);
  CHECK_THROWS_AS(decaying_source_field(p, 1.0, 0.0), DomainError);
  auto sustained = p;
  sustained.lambda = 0.0;
  CHECK_THROWS_AS(decaying_source_field(sustained, 1.0, 1.0), DomainError);
}

TEST_CASE("greens_eval") {
  const Point origin{};
  CHECK(greens_eval({1, 0, 0}, 1.0, origin, 2.0, 1.0) == 0.0);
  CHECK(greens_eval({1, 0, 0}, 2.0, origin, 2.0, 1.0) == 0.0);
  CHECK(greens_eval({0.5, 0.5, 0.5}, 3.0, {0.5, 0.5, 0.5}, 2.0, 1.0) ==
        Approx(0.022448390265645820211).epsilon(1e-13));
  const Point y{0.3, -0.2, 1.0};
  boost::math::quadrature::exp_sinh<double> integrator;
  const double total = integrator.integrate([&](double r) {
    return 4 * kPi * r * r * greens_eval(y + Point{r, 0, 0}, 1.5, y, 0.25, 0.8);
  });
  CHECK(rel_err(total, 1.0) < 1e-6);
  // Shifted Gaussian with Q = 1.
  const Point x{1.0, 2.0, -0.5};
  CHECK(greens_eval(x, 2.0, y, 0.5, 1.2) ==
        Approx(gaussian_field({1.2, 1.0, {}, 0.0, 3}, norm(x - y), 1.5).value).epsilon(1e-14));
}

TEST_CASE("superpose") {
  const double nu = 0.9;
  const Point x{0.4, 0.1, -0.3};
  CHECK(superpose({}, nu, x, 1.0) == 0.0);

  const std::vector<SourceEvent> one{{{}, 0.0, 2.0}};
  CHECK(superpose(one, nu, x, 1.7) ==
        Approx(gaussian_field({nu, 2.0, {}, 0.0, 3}, norm(x), 1.7).value).epsilon(1e-14));

  // Q0 at t = 0 plus Q0 dQ at t0, evaluated at 2 t0.
  const double q0 = 1.5;
  const double dq = 0.4;
  const double t0 = 0.8;
  const std::vector<SourceEvent> two{{{}, 0.0, q0}, {{}, t0, q0 * dq}};
  const double r = norm(x);
  const double old_part = gaussian_field({nu, q0, {}, 0.0, 3}, r, 2 * t0).value;
  const double new_part = gaussian_field({nu, q0 * dq, {}, 0.0, 3}, r, t0).value;
  CHECK(superpose(two, nu, x, 2 * t0) == Approx(old_part + new_part).epsilon(1e-14));
}

TEST_CASE("superpose is linear in the strengths") {
  std::vector<SourceEvent> events{{{0, 0, 0}, 0.0, 1.0}, {{1, 0, 0}, 0.3, 2.5}, {{0, 1, 1}, 0.9, 0.7}};
  const Point x{0.2, 0.5, 0.1};
  const double base = superpose(events, 1.0, x, 2.0);
  for (double alpha : {2.0, 0.5, 8.0}) {  // powers of two scale exactly
    auto scaled = events;
    for (auto& e : scaled) e.strength *= alpha;
    CHECK(superpose(scaled, 1.0, x, 2.0) == alpha * base);
  }
  auto scaled = events;
  for (auto& e : scaled) e.strength *= 3.7;
  CHECK(superpose(scaled, 1.0, x, 2.0) == Approx(3.7 * base).epsilon(1e-15));
}

TEST_CASE("Field wrapper evaluates about the source position") {
  FieldParams p = unit3d();
  p.source_pos = {1.0, 1.0, 0.0};
  const auto f = make_gaussian(p);
  CHECK(f.at({1.0, 1.0, 0.0}, 1.0).value == Approx(gaussian_field(p, 0.0, 1.0).value));
  CHECK(f.at({1.0, 3.0, 0.0}, 1.0).value == Approx(gaussian_field(p, 2.0, 1.0).value));
  CHECK(f.dim() == 3);
  CHECK(f.length_scale(4.0) == Approx(2.0));
}
