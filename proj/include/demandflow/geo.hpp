#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace demandflow {

inline constexpr double earth_radius_m = 6371000.0;

struct PlanarPoint {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const PlanarPoint&, const PlanarPoint&) = default;
};

struct GeoPoint {
    double lon = 0.0;
    double lat = 0.0;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline double degrees_to_radians(double deg) { return deg * std::numbers::pi / 180.0; }
inline double radians_to_degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Local equirectangular projection. Good to well under 0.1% over a city.
inline PlanarPoint project_coordinates(double lon, double lat, double origin_lon, double origin_lat) {
    const double k = std::cos(degrees_to_radians(origin_lat));
    return {earth_radius_m * k * degrees_to_radians(lon - origin_lon),
            earth_radius_m * degrees_to_radians(lat - origin_lat)};
}

class Projection {
public:
    Projection() = default;
    explicit Projection(GeoPoint origin) : origin_(origin) {}

    GeoPoint origin() const { return origin_; }

    PlanarPoint forward(GeoPoint p) const {
        return project_coordinates(p.lon, p.lat, origin_.lon, origin_.lat);
    }

    GeoPoint inverse(PlanarPoint p) const {
        const double k = std::cos(degrees_to_radians(origin_.lat));
        return {origin_.lon + radians_to_degrees(p.x / (earth_radius_m * k)),
                origin_.lat + radians_to_degrees(p.y / earth_radius_m)};
    }

    friend bool operator==(const Projection&, const Projection&) = default;

private:
    GeoPoint origin_{};
};

struct BoundingBox {
    double xmin = std::numeric_limits<double>::infinity();
    double ymin = std::numeric_limits<double>::infinity();
    double xmax = -std::numeric_limits<double>::infinity();
    double ymax = -std::numeric_limits<double>::infinity();

    bool empty() const { return xmin > xmax || ymin > ymax; }
    double width() const { return empty() ? 0.0 : xmax - xmin; }
    double height() const { return empty() ? 0.0 : ymax - ymin; }

    void extend(PlanarPoint p) {
        xmin = std::min(xmin, p.x);
        ymin = std::min(ymin, p.y);
        xmax = std::max(xmax, p.x);
        ymax = std::max(ymax, p.y);
    }

    bool contains(PlanarPoint p) const {
        return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

}  // namespace demandflow
