#pragma once

namespace reem {

inline constexpr double kEarthRadiusMeters = 6371000.0;

/// A WGS-ish point; construction validates lat in [-90, 90] and
/// lon in [-180, 180].
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  static GeoPoint make(double lat, double lon);
};

/// Great-circle distance on a sphere of radius 6,371,000 m.
double haversine_meters(const GeoPoint& a, const GeoPoint& b);

}  // namespace reem
