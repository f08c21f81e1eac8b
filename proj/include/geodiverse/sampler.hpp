#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geodiverse/apportion.hpp"
#include "geodiverse/errors.hpp"
#include "geodiverse/geometry.hpp"
#include "geodiverse/manifest.hpp"
#include "geodiverse/rng.hpp"

namespace geodiverse {

// Group polygons in WGS84. Groups are meant to be mutually exclusive;
// overlapping shapes are tolerated in lenient mode (first containing group
// wins) and rejected by check_exclusive().
struct RegionSet {
    std::vector<std::pair<std::string, geom::MultiPolygon>> regions;
    std::map<std::string, double> population_fraction;  // optional land share

    const geom::MultiPolygon* find(const std::string& group) const {
        for (const auto& [name, mp] : regions) {
            if (name == group) return &mp;
        }
        return nullptr;
    }

    void check_exclusive() const {
        for (std::size_t i = 0; i < regions.size(); ++i) {
            for (std::size_t j = i + 1; j < regions.size(); ++j) {
                if (geom::multipolygons_overlap(regions[i].second,
                                                regions[j].second)) {
                    throw validation_error("region groups overlap: '" +
                                           regions[i].first + "' and '" +
                                           regions[j].first + "'");
                }
            }
        }
    }

    static RegionSet from_geojson(const std::string& path) {
        RegionSet rs;
        for (auto& [group, mp] : geom::load_geojson_features(path, "group")) {
            rs.regions.emplace_back(group, std::move(mp));
        }
        return rs;
    }
};

// Largest-remainder rounding of n * alpha_g; counts sum to n exactly.
inline std::map<std::string, std::size_t> allocate_counts(
    const AllocationVector& alpha, std::size_t n) {
    alpha.validate();
    if (n < 1) throw validation_error("allocate_counts needs n >= 1");
    const auto counts = largest_remainder(alpha.weights, n);
    std::map<std::string, std::size_t> out;
    for (std::size_t g = 0; g < alpha.groups.size(); ++g) {
        out[alpha.groups[g]] = counts[g];
    }
    return out;
}

namespace detail {

// One point uniform per unit area on the sphere within the multipolygon:
// lon uniform, lat drawn with density proportional to cos(lat) via the
// inverse CDF on sin(lat), then rejection against polygon containment.
inline std::optional<geom::Point> draw_point(const geom::MultiPolygon& mp,
                                             const geom::BBox& box, Rng& rng,
                                             std::size_t max_attempts) {
    const double s_lo = std::sin(box.min_y * geom::kDegToRad);
    const double s_hi = std::sin(box.max_y * geom::kDegToRad);
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        const double lon = rng.uniform(box.min_x, box.max_x);
        const double lat =
            std::asin(rng.uniform(s_lo, s_hi)) / geom::kDegToRad;
        const geom::Point p{lon, lat};
        if (geom::point_in_multipolygon(p, mp)) return p;
    }
    return std::nullopt;
}

}  // namespace detail

// Draws a manifest matching allocate_counts(alpha, n) exactly, each point
// uniform over its group's polygons. Groups run in declared order with
// independent RNG substreams keyed by (seed, group), so one group's draw
// count never shifts another group's points.
inline DatasetManifest sample_points(
    const RegionSet& regions, const AllocationVector& alpha, std::size_t n,
    std::uint64_t seed,
    std::optional<double> min_separation_m = std::nullopt,
    const std::string& manifest_name = "sample") {
    alpha.validate();
    const auto counts = allocate_counts(alpha, n);
    for (const auto& [group, count] : counts) {
        if (count > 0 && regions.find(group) == nullptr) {
            throw config_error("group '" + group +
                               "' has no polygons in the region set");
        }
    }

    DatasetManifest manifest;
    manifest.name = manifest_name;
    manifest.groups = alpha.groups;
    manifest.allocation = alpha;
    manifest.seed = seed;

    constexpr std::size_t kContainmentAttempts = 200000;
    constexpr std::size_t kSeparationRetries = 2000;

    std::vector<GeoSample> accepted;
    for (const std::string& group : alpha.groups) {
        const std::size_t want = counts.at(group);
        if (want == 0) continue;
        const geom::MultiPolygon& mp = *regions.find(group);
        const geom::BBox box = geom::bounding_box(mp);
        Rng rng = substream(seed, "group:" + group);
        for (std::size_t i = 0; i < want; ++i) {
            std::optional<geom::Point> placed;
            for (std::size_t retry = 0; retry < kSeparationRetries; ++retry) {
                const auto p =
                    detail::draw_point(mp, box, rng, kContainmentAttempts);
                if (!p) {
                    throw saturation_error(
                        "group '" + group +
                        "': rejection sampling exhausted its attempt budget",
                        accepted.size());
                }
                if (min_separation_m) {
                    const bool clear = std::none_of(
                        accepted.begin(), accepted.end(),
                        [&](const GeoSample& s) {
                            return geom::great_circle_m(s.lat, s.lon, p->y,
                                                        p->x) <
                                   *min_separation_m;
                        });
                    if (!clear) continue;
                }
                placed = p;
                break;
            }
            if (!placed) {
                throw saturation_error(
                    "group '" + group + "': could not place point " +
                        std::to_string(i) + " at min separation " +
                        std::to_string(*min_separation_m) + " m",
                    accepted.size());
            }
            GeoSample s;
            s.id = group + ":" + std::to_string(i);
            s.lat = placed->y;
            s.lon = placed->x;
            s.group_label = group;
            accepted.push_back(std::move(s));
        }
    }
    manifest.samples = std::move(accepted);
    manifest.validate();
    return manifest;
}

}  // namespace geodiverse
