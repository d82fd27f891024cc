#pragma once

namespace stef {

inline constexpr double kEarthRadiusKm = 6371.0088;

struct LatLon {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]
};

/// Great-circle distance in km. Throws DomainError on out-of-range input.
double haversine_km(LatLon a, LatLon b);

}  // namespace stef
