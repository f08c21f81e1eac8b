#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "geodiverse/errors.hpp"
#include "geodiverse/geometry.hpp"
#include "geodiverse/geotiff.hpp"

namespace geodiverse {

namespace proj {

// WGS84 ellipsoid.
inline constexpr double kA = 6378137.0;
inline constexpr double kF = 1.0 / 298.257223563;

// Inverse transverse Mercator (Snyder's series), good to well under 1e-6
// degrees within a UTM zone.
inline std::pair<double, double> utm_to_lonlat(double easting,
                                               double northing, int zone,
                                               bool north) {
    constexpr double k0 = 0.9996;
    const double e2 = kF * (2.0 - kF);
    const double ep2 = e2 / (1.0 - e2);
    const double x = easting - 500000.0;
    const double y = north ? northing : northing - 10000000.0;

    const double m = y / k0;
    const double mu =
        m / (kA * (1.0 - e2 / 4.0 - 3.0 * e2 * e2 / 64.0 -
                   5.0 * e2 * e2 * e2 / 256.0));
    const double e1 =
        (1.0 - std::sqrt(1.0 - e2)) / (1.0 + std::sqrt(1.0 - e2));
    const double phi1 =
        mu + (3.0 * e1 / 2.0 - 27.0 * e1 * e1 * e1 / 32.0) * std::sin(2 * mu) +
        (21.0 * e1 * e1 / 16.0 - 55.0 * std::pow(e1, 4) / 32.0) *
            std::sin(4 * mu) +
        (151.0 * e1 * e1 * e1 / 96.0) * std::sin(6 * mu) +
        (1097.0 * std::pow(e1, 4) / 512.0) * std::sin(8 * mu);

    const double sin1 = std::sin(phi1), cos1 = std::cos(phi1);
    const double tan1 = sin1 / cos1;
    const double c1 = ep2 * cos1 * cos1;
    const double t1 = tan1 * tan1;
    const double n1 = kA / std::sqrt(1.0 - e2 * sin1 * sin1);
    const double r1 =
        kA * (1.0 - e2) / std::pow(1.0 - e2 * sin1 * sin1, 1.5);
    const double d = x / (n1 * k0);

    const double lat =
        phi1 - (n1 * tan1 / r1) *
                   (d * d / 2.0 -
                    (5.0 + 3.0 * t1 + 10.0 * c1 - 4.0 * c1 * c1 -
                     9.0 * ep2) *
                        std::pow(d, 4) / 24.0 +
                    (61.0 + 90.0 * t1 + 298.0 * c1 + 45.0 * t1 * t1 -
                     252.0 * ep2 - 3.0 * c1 * c1) *
                        std::pow(d, 6) / 720.0);
    const double lon_origin = (zone * 6.0 - 183.0) * geom::kDegToRad;
    const double lon =
        lon_origin +
        (d - (1.0 + 2.0 * t1 + c1) * d * d * d / 6.0 +
         (5.0 - 2.0 * c1 + 28.0 * t1 - 3.0 * c1 * c1 + 8.0 * ep2 +
          24.0 * t1 * t1) *
             std::pow(d, 5) / 120.0) /
            cos1;
    return {lon / geom::kDegToRad, lat / geom::kDegToRad};
}

// CRS point -> WGS84 lon/lat. Geographic CRSs pass through; UTM codes
// EPSG:326xx / EPSG:327xx are inverted analytically.
inline std::pair<double, double> to_wgs84(double x, double y,
                                          const std::string& crs,
                                          bool geographic) {
    if (geographic || crs == "EPSG:4326") return {x, y};
    if (crs.rfind("EPSG:326", 0) == 0 || crs.rfind("EPSG:327", 0) == 0) {
        const int zone = std::stoi(crs.substr(8));
        if (zone < 1 || zone > 60) {
            throw config_error("bad UTM zone in CRS " + crs);
        }
        return utm_to_lonlat(x, y, zone, crs[7] == '6');
    }
    throw config_error("unknown CRS: " + crs);
}

}  // namespace proj

// Per-image area split across map classes, in square meters.
struct AreaVector {
    std::map<std::string, double> area_m2;
    double total_m2 = 0.0;

    double at(const std::string& cls) const {
        const auto it = area_m2.find(cls);
        return it == area_m2.end() ? 0.0 : it->second;
    }
};

// Categorical class geometry: vector polygons or a categorical raster.
class RegionMap {
  public:
    struct VectorForm {
        std::vector<std::pair<std::string, geom::MultiPolygon>> classes;
    };
    struct RasterForm {
        RasterTile grid;                        // single band, class values
        std::map<int, std::string> legend;      // value -> class name
        std::optional<int> nodata;
    };

    explicit RegionMap(VectorForm v) : form_(std::move(v)) {}
    explicit RegionMap(RasterForm r) : form_(std::move(r)) {
        const auto& rf = std::get<RasterForm>(form_);
        if (rf.grid.band_count() != 1) {
            throw validation_error("raster region map must be single-band");
        }
    }

    bool is_vector() const {
        return std::holds_alternative<VectorForm>(form_);
    }
    const VectorForm& vector_form() const {
        if (!is_vector()) throw config_error("region map is not vector-form");
        return std::get<VectorForm>(form_);
    }
    const RasterForm& raster_form() const {
        if (is_vector()) throw config_error("region map is not raster-form");
        return std::get<RasterForm>(form_);
    }

    std::vector<std::string> class_names() const {
        std::vector<std::string> names;
        if (is_vector()) {
            for (const auto& [cls, _] : vector_form().classes) {
                names.push_back(cls);
            }
        } else {
            for (const auto& [_, cls] : raster_form().legend) {
                names.push_back(cls);
            }
        }
        return names;
    }

    static RegionMap from_geojson(const std::string& path) {
        VectorForm v;
        for (auto& [cls, mp] : geom::load_geojson_features(path, "class")) {
            v.classes.emplace_back(cls, std::move(mp));
        }
        return RegionMap(std::move(v));
    }

    // Categorical GeoTIFF plus a JSON legend {"10": "Tree cover", ...}.
    static RegionMap from_raster(const std::string& tif_path,
                                 const std::string& legend_path) {
        RasterForm r;
        r.grid = read_geotiff(tif_path);
        std::ifstream in(legend_path);
        if (!in) throw persistence_error("cannot open legend: " + legend_path);
        nlohmann::json legend;
        try {
            in >> legend;
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(legend_path + ": " + e.what());
        }
        for (const auto& [key, value] : legend.items()) {
            r.legend[std::stoi(key)] = value.get<std::string>();
        }
        if (r.grid.nodata) r.nodata = static_cast<int>(*r.grid.nodata);
        return RegionMap(std::move(r));
    }

  private:
    std::variant<VectorForm, RasterForm> form_;
};

// Ground quadrilateral of a tile's pixel grid, in WGS84, counterclockwise.
inline geom::Ring footprint(const RasterTile& tile) {
    tile.validate();
    const double w = static_cast<double>(tile.width);
    const double h = static_cast<double>(tile.height);
    geom::Ring ring;
    for (const auto& [col, row] :
         {std::pair{0.0, 0.0}, {0.0, h}, {w, h}, {w, 0.0}}) {
        const auto [x, y] = tile.pixel_to_crs(col, row);
        const auto [lon, lat] =
            proj::to_wgs84(x, y, tile.crs, tile.geographic);
        ring.push_back({lon, lat});
    }
    geom::normalize_ring(ring, true);
    return ring;
}

namespace detail {

inline double clipped_area_m2(const geom::Polygon& poly,
                              const geom::Ring& convex_footprint) {
    double area =
        geom::spherical_area_m2(geom::clip_to_convex(poly.outer,
                                                     convex_footprint));
    for (const geom::Ring& hole : poly.holes) {
        area -= geom::spherical_area_m2(
            geom::clip_to_convex(hole, convex_footprint));
    }
    return std::max(area, 0.0);
}

}  // namespace detail

// Per-class ground area under the footprint. Vector maps use polygon
// clipping with spherical areas; raster maps count pixel centers inside
// the footprint, each weighted by its cos(latitude)-corrected pixel area.
inline AreaVector area_vector(const geom::Ring& tile_footprint,
                              const RegionMap& map) {
    if (tile_footprint.size() < 3) {
        throw validation_error("footprint has fewer than 3 vertices");
    }
    if (!geom::ring_is_convex(tile_footprint)) {
        throw validation_error("footprint ring is not convex");
    }
    AreaVector out;
    if (map.is_vector()) {
        for (const auto& [cls, mp] : map.vector_form().classes) {
            double area = 0.0;
            for (const geom::Polygon& poly : mp) {
                area += detail::clipped_area_m2(poly, tile_footprint);
            }
            out.area_m2[cls] = area;
            out.total_m2 += area;
        }
    } else {
        const auto& rf = map.raster_form();
        const RasterTile& grid = rf.grid;
        const auto& gt = grid.geotransform;
        for (const auto& [_, cls] : rf.legend) out.area_m2[cls] = 0.0;

        // restrict the scan to rows/cols whose centers can fall in the bbox
        const geom::BBox box = geom::bounding_box(tile_footprint);
        const double deg_m = geom::kDegToRad * geom::kEarthRadiusM;
        for (std::size_t row = 0; row < grid.height; ++row) {
            const double lat = gt[3] + (row + 0.5) * gt[5];
            if (lat < box.min_y || lat > box.max_y) continue;
            for (std::size_t col = 0; col < grid.width; ++col) {
                const double lon = gt[0] + (col + 0.5) * gt[1];
                if (lon < box.min_x || lon > box.max_x) continue;
                if (!geom::point_in_ring({lon, lat}, tile_footprint)) {
                    continue;
                }
                const float raw = grid.at(0, row, col);
                if (std::isnan(raw)) continue;
                const int value = static_cast<int>(raw);
                if (rf.nodata && value == *rf.nodata) continue;
                const auto it = rf.legend.find(value);
                if (it == rf.legend.end()) {
                    throw validation_error(
                        "raster map value " + std::to_string(value) +
                        " missing from legend");
                }
                const double pixel_area = std::abs(gt[1] * gt[5]) * deg_m *
                                          deg_m *
                                          std::cos(lat * geom::kDegToRad);
                out.area_m2[it->second] += pixel_area;
                out.total_m2 += pixel_area;
            }
        }
    }
    if (out.total_m2 <= 0.0) {
        throw no_overlap_error("footprint does not overlap the region map");
    }
    return out;
}

// Class of the first containing polygon in map order (documented
// tie-break for shared borders).
inline std::string point_group(double lat, double lon, const RegionMap& map) {
    const geom::Point p{lon, lat};
    for (const auto& [cls, mp] : map.vector_form().classes) {
        if (geom::point_in_multipolygon(p, mp)) return cls;
    }
    throw no_overlap_error("point (" + std::to_string(lat) + ", " +
                           std::to_string(lon) +
                           ") is outside every map class");
}

}  // namespace geodiverse
