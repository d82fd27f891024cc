#include "stef/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stef/errors.hpp"

namespace stef {

namespace {

void check(LatLon p) {
  if (!(p.lat >= -90.0 && p.lat <= 90.0) || !(p.lon >= -180.0 && p.lon <= 180.0)) {
    throw DomainError("haversine_km: coordinates out of range");
  }
}

}  // namespace

double haversine_km(LatLon a, LatLon b) {
  check(a);
  check(b);
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * deg;
  const double dlon = (b.lon - a.lon) * deg;
  const double s = std::sin(0.5 * dlat);
  const double c = std::sin(0.5 * dlon);
  const double h = s * s + std::cos(a.lat * deg) * std::cos(b.lat * deg) * c * c;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

}  // namespace stef
