#include "reem/geo.hpp"

#include <cmath>
#include <cstdio>

#include "reem/errors.hpp"

namespace reem {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
}

GeoPoint GeoPoint::make(double lat, double lon) {
  if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", lat);
    throw ValidationError(std::string("latitude out of [-90,90]: ") + buf);
  }
  if (!std::isfinite(lon) || lon < -180.0 || lon > 180.0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", lon);
    throw ValidationError(std::string("longitude out of [-180,180]: ") + buf);
  }
  return GeoPoint{lat, lon};
}

double haversine_meters(const GeoPoint& a, const GeoPoint& b) {
  const double lat1 = a.lat * kDegToRad;
  const double lat2 = b.lat * kDegToRad;
  const double dlat = (b.lat - a.lat) * kDegToRad;
  const double dlon = (b.lon - a.lon) * kDegToRad;

  const double sin_dlat = std::sin(dlat / 2.0);
  const double sin_dlon = std::sin(dlon / 2.0);
  const double h = sin_dlat * sin_dlat +
                   std::cos(lat1) * std::cos(lat2) * sin_dlon * sin_dlon;
  // Clamp guards rounding when the points are antipodal.
  const double c = 2.0 * std::asin(std::min(1.0, std::sqrt(h)));
  return kEarthRadiusMeters * c;
}

}  // namespace reem
