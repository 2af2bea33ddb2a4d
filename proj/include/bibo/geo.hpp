#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bibo::geo {

inline constexpr double earth_radius_m = 6'371'000.0;

struct LatLon {
    double lat = 0.0;  // degrees
    double lon = 0.0;  // degrees
};

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Great-circle distance in meters.
inline double haversine(LatLon a, LatLon b) {
    const double phi1 = deg2rad(a.lat), phi2 = deg2rad(b.lat);
    const double dphi = phi2 - phi1;
    const double dlambda = deg2rad(b.lon - a.lon);
    const double s1 = std::sin(dphi / 2.0), s2 = std::sin(dlambda / 2.0);
    const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    return 2.0 * earth_radius_m * std::asin(std::sqrt(std::min(1.0, h)));
}

/// Initial bearing from a to b, degrees clockwise from north in [0, 360).
/// Coincident points have bearing 0.
inline double bearing(LatLon a, LatLon b) {
    if (a.lat == b.lat && a.lon == b.lon) return 0.0;
    const double phi1 = deg2rad(a.lat), phi2 = deg2rad(b.lat);
    const double dlambda = deg2rad(b.lon - a.lon);
    const double y = std::sin(dlambda) * std::cos(phi2);
    const double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlambda);
    double deg = rad2deg(std::atan2(y, x));
    deg = std::fmod(deg + 360.0, 360.0);
    return deg >= 360.0 ? 0.0 : deg;
}

/// Local east/north tangent plane around an origin; adequate over a few km.
struct LocalFrame {
    LatLon origin;

    LatLon to_latlon(double east_m, double north_m) const {
        const double lat = origin.lat + rad2deg(north_m / earth_radius_m);
        const double lon = origin.lon + rad2deg(east_m / (earth_radius_m * std::cos(deg2rad(origin.lat))));
        return {lat, lon};
    }

    void to_local(LatLon p, double& east_m, double& north_m) const {
        north_m = deg2rad(p.lat - origin.lat) * earth_radius_m;
        east_m = deg2rad(p.lon - origin.lon) * earth_radius_m * std::cos(deg2rad(origin.lat));
    }
};

} // namespace bibo::geo
