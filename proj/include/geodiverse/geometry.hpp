#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geodiverse/errors.hpp"

namespace geodiverse::geom {

// Authalic sphere radius in meters; all spherical areas use it.
inline constexpr double kEarthRadiusM = 6371007.2;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Point {
    double x = 0.0;  // lon for geographic coordinates
    double y = 0.0;  // lat
    friend bool operator==(const Point&, const Point&) = default;
};

// Open ring: last vertex implicitly connects to the first.
using Ring = std::vector<Point>;

struct Polygon {
    Ring outer;
    std::vector<Ring> holes;
};

using MultiPolygon = std::vector<Polygon>;

struct BBox {
    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
    bool contains(const Point& p) const {
        return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
    }
    bool intersects(const BBox& o) const {
        return !(o.min_x > max_x || o.max_x < min_x || o.min_y > max_y ||
                 o.max_y < min_y);
    }
};

inline BBox bounding_box(const Ring& ring) {
    BBox b{ring.front().x, ring.front().y, ring.front().x, ring.front().y};
    for (const Point& p : ring) {
        b.min_x = std::min(b.min_x, p.x);
        b.max_x = std::max(b.max_x, p.x);
        b.min_y = std::min(b.min_y, p.y);
        b.max_y = std::max(b.max_y, p.y);
    }
    return b;
}

inline BBox bounding_box(const MultiPolygon& mp) {
    BBox b = bounding_box(mp.front().outer);
    for (const Polygon& poly : mp) {
        BBox pb = bounding_box(poly.outer);
        b.min_x = std::min(b.min_x, pb.min_x);
        b.max_x = std::max(b.max_x, pb.max_x);
        b.min_y = std::min(b.min_y, pb.min_y);
        b.max_y = std::max(b.max_y, pb.max_y);
    }
    return b;
}

// Planar signed area (shoelace); counterclockwise is positive.
inline double signed_area(const Ring& ring) {
    double acc = 0.0;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = ring[i];
        const Point& b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    return 0.5 * acc;
}

// Spherical ring area in m^2 on the authalic sphere. Edge-additive discrete
// Green's theorem form, so splitting a region and summing is exact.
inline double spherical_area_m2(const Ring& ring) {
    if (ring.size() < 3) return 0.0;
    double acc = 0.0;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = ring[i];
        const Point& b = ring[(i + 1) % n];
        double dlon = (b.x - a.x) * kDegToRad;
        // wrap across the antimeridian
        if (dlon > std::numbers::pi) dlon -= 2 * std::numbers::pi;
        if (dlon < -std::numbers::pi) dlon += 2 * std::numbers::pi;
        acc += dlon * (2.0 + std::sin(a.y * kDegToRad) +
                       std::sin(b.y * kDegToRad));
    }
    return std::abs(acc) * kEarthRadiusM * kEarthRadiusM / 2.0;
}

inline double spherical_area_m2(const Polygon& poly) {
    double a = spherical_area_m2(poly.outer);
    for (const Ring& h : poly.holes) a -= spherical_area_m2(h);
    return std::max(a, 0.0);
}

// Great-circle distance in meters (haversine).
inline double great_circle_m(double lat1, double lon1, double lat2,
                             double lon2) {
    const double p1 = lat1 * kDegToRad, p2 = lat2 * kDegToRad;
    const double dp = (lat2 - lat1) * kDegToRad;
    const double dl = (lon2 - lon1) * kDegToRad;
    const double a = std::sin(dp / 2) * std::sin(dp / 2) +
                     std::cos(p1) * std::cos(p2) * std::sin(dl / 2) *
                         std::sin(dl / 2);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

// Crossing-number containment. Points on an edge count as inside.
inline bool point_in_ring(const Point& p, const Ring& ring) {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = ring[i];
        const Point& b = ring[j];
        // on-edge check via collinearity within the segment's bbox
        const double cross =
            (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if (cross == 0.0 && p.x >= std::min(a.x, b.x) &&
            p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
            p.y <= std::max(a.y, b.y)) {
            return true;
        }
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xint = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if (p.x < xint) inside = !inside;
        }
    }
    return inside;
}

inline bool point_in_polygon(const Point& p, const Polygon& poly) {
    if (!point_in_ring(p, poly.outer)) return false;
    for (const Ring& h : poly.holes) {
        if (point_in_ring(p, h)) return false;
    }
    return true;
}

inline bool point_in_multipolygon(const Point& p, const MultiPolygon& mp) {
    return std::any_of(mp.begin(), mp.end(), [&](const Polygon& poly) {
        return point_in_polygon(p, poly);
    });
}

// Sutherland-Hodgman: clip an arbitrary simple ring against one convex
// ring. The clip ring must be convex and counterclockwise.
inline Ring clip_to_convex(const Ring& subject, const Ring& convex_clip) {
    Ring out = subject;
    const std::size_t m = convex_clip.size();
    for (std::size_t c = 0; c < m && !out.empty(); ++c) {
        const Point& ca = convex_clip[c];
        const Point& cb = convex_clip[(c + 1) % m];
        auto side = [&](const Point& p) {
            return (cb.x - ca.x) * (p.y - ca.y) - (cb.y - ca.y) * (p.x - ca.x);
        };
        Ring in;
        in.swap(out);
        const std::size_t n = in.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Point& a = in[i];
            const Point& b = in[(i + 1) % n];
            const double sa = side(a);
            const double sb = side(b);
            auto intersect = [&]() {
                const double t = sa / (sa - sb);
                return Point{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
            };
            if (sa >= 0.0) {
                out.push_back(a);
                if (sb < 0.0) out.push_back(intersect());
            } else if (sb >= 0.0) {
                out.push_back(intersect());
            }
        }
    }
    return out;
}

// Normalization: drop explicit closing vertices and force outer rings
// counterclockwise, holes clockwise.
inline void normalize_ring(Ring& ring, bool want_ccw) {
    if (ring.size() >= 2 && ring.front() == ring.back()) ring.pop_back();
    if (ring.size() >= 3 && (signed_area(ring) > 0.0) != want_ccw) {
        std::reverse(ring.begin(), ring.end());
    }
}

inline void normalize(Polygon& poly) {
    normalize_ring(poly.outer, true);
    for (Ring& h : poly.holes) normalize_ring(h, false);
}

inline void normalize(MultiPolygon& mp) {
    for (Polygon& p : mp) normalize(p);
}

inline bool ring_is_convex(const Ring& ring) {
    const std::size_t n = ring.size();
    if (n < 3) return false;
    int sign = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = ring[i];
        const Point& b = ring[(i + 1) % n];
        const Point& c = ring[(i + 2) % n];
        const double cross =
            (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        if (cross != 0.0) {
            const int s = cross > 0.0 ? 1 : -1;
            if (sign != 0 && s != sign) return false;
            sign = s;
        }
    }
    return true;
}

inline bool segments_properly_intersect(const Point& p1, const Point& p2,
                                        const Point& q1, const Point& q2) {
    auto orient = [](const Point& a, const Point& b, const Point& c) {
        const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
    };
    const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
    const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
    return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

// Overlap test for region exclusivity checks: true if any vertex of one
// multipolygon lies strictly inside the other or any edges properly cross.
inline bool multipolygons_overlap(const MultiPolygon& a,
                                  const MultiPolygon& b) {
    if (a.empty() || b.empty()) return false;
    if (!bounding_box(a).intersects(bounding_box(b))) return false;
    auto any_vertex_inside = [](const MultiPolygon& mp,
                                const MultiPolygon& other) {
        for (const Polygon& poly : mp) {
            for (const Point& v : poly.outer) {
                if (point_in_multipolygon(v, other)) return true;
            }
        }
        return false;
    };
    if (any_vertex_inside(a, b) || any_vertex_inside(b, a)) return true;
    for (const Polygon& pa : a) {
        const std::size_t n = pa.outer.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Point& p1 = pa.outer[i];
            const Point& p2 = pa.outer[(i + 1) % n];
            for (const Polygon& pb : b) {
                const std::size_t m = pb.outer.size();
                for (std::size_t j = 0; j < m; ++j) {
                    if (segments_properly_intersect(p1, p2, pb.outer[j],
                                                    pb.outer[(j + 1) % m])) {
                        return true;
                    }
                }
            }
        }
    }
    return false;
}

// --- GeoJSON ---------------------------------------------------------------

inline Ring parse_geojson_ring(const nlohmann::json& coords) {
    Ring ring;
    for (const auto& pt : coords) {
        ring.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    }
    return ring;
}

inline Polygon parse_geojson_polygon(const nlohmann::json& coords) {
    if (coords.empty()) throw parse_error("GeoJSON polygon has no rings");
    Polygon poly;
    poly.outer = parse_geojson_ring(coords[0]);
    for (std::size_t i = 1; i < coords.size(); ++i) {
        poly.holes.push_back(parse_geojson_ring(coords[i]));
    }
    normalize(poly);
    return poly;
}

inline MultiPolygon parse_geojson_geometry(const nlohmann::json& geometry) {
    const std::string type = geometry.at("type").get<std::string>();
    MultiPolygon mp;
    if (type == "Polygon") {
        mp.push_back(parse_geojson_polygon(geometry.at("coordinates")));
    } else if (type == "MultiPolygon") {
        for (const auto& poly : geometry.at("coordinates")) {
            mp.push_back(parse_geojson_polygon(poly));
        }
    } else {
        throw parse_error("unsupported GeoJSON geometry type: " + type);
    }
    return mp;
}

// Loads a FeatureCollection, keying each feature by `label_property`.
inline std::vector<std::pair<std::string, MultiPolygon>>
load_geojson_features(const std::string& path,
                      const std::string& label_property) {
    std::ifstream in(path);
    if (!in) throw persistence_error("cannot open GeoJSON file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("invalid GeoJSON in " + path + ": " + e.what());
    }
    if (doc.value("type", "") != "FeatureCollection") {
        throw parse_error(path + ": expected a GeoJSON FeatureCollection");
    }
    std::vector<std::pair<std::string, MultiPolygon>> features;
    for (const auto& feature : doc.at("features")) {
        const auto& props = feature.at("properties");
        if (!props.contains(label_property)) {
            throw parse_error(path + ": feature missing property '" +
                              label_property + "'");
        }
        features.emplace_back(props.at(label_property).get<std::string>(),
                              parse_geojson_geometry(feature.at("geometry")));
    }
    return features;
}

}  // namespace geodiverse::geom
