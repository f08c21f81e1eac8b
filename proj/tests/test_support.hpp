#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <random>
#include <string>
#include <vector>

#include "geodiverse/geometry.hpp"
#include "geodiverse/geotiff.hpp"
#include "geodiverse/manifest.hpp"

namespace testsupport {

namespace fs = std::filesystem;
namespace gd = geodiverse;

// Fresh scratch directory under the system temp root, removed on scope
// exit.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = fs::temp_directory_path() /
                ("geodiverse-" + tag + "-" + std::to_string(::getpid()) +
                 "-" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

  private:
    fs::path path_;
};

inline gd::geom::Ring square(double min_x, double min_y, double side) {
    return {{min_x, min_y},
            {min_x + side, min_y},
            {min_x + side, min_y + side},
            {min_x, min_y + side}};
}

inline gd::geom::MultiPolygon square_mp(double min_x, double min_y,
                                        double side) {
    return {gd::geom::Polygon{square(min_x, min_y, side), {}}};
}

inline gd::geom::MultiPolygon rect_mp(double x0, double y0, double x1,
                                      double y1) {
    return {gd::geom::Polygon{
        {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, {}}};
}

// Single-band tile with a given fill value; geographic CRS at (lon0,
// lat0), pixel size in degrees.
inline gd::RasterTile make_tile(std::size_t width, std::size_t height,
                                float fill, double lon0 = 0.0,
                                double lat0 = 0.0,
                                double pixel_deg = 0.01,
                                std::vector<std::string> bands = {"B1"}) {
    gd::RasterTile tile;
    tile.bands = std::move(bands);
    tile.width = width;
    tile.height = height;
    tile.dtype = gd::PixelType::F32;
    tile.pixels.assign(tile.bands.size() * width * height, fill);
    tile.geotransform = {lon0, pixel_deg, 0.0, lat0, 0.0, -pixel_deg};
    tile.crs = "EPSG:4326";
    tile.geographic = true;
    return tile;
}

inline gd::GeoSample make_sample(const std::string& id, double lat,
                                 double lon, const std::string& group,
                                 const std::string& cls = "") {
    gd::GeoSample s;
    s.id = id;
    s.lat = lat;
    s.lon = lon;
    s.group_label = group;
    s.class_label = cls;
    return s;
}

inline std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

inline void spit(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

// Toy six-continent world: disjoint squares, one per continent.
inline void write_toy_continents(const fs::path& path) {
    std::string features;
    const std::vector<std::pair<std::string, std::pair<double, double>>>
        positions = {{"Asia", {80.0, 30.0}},    {"Africa", {20.0, 0.0}},
                     {"Europe", {10.0, 50.0}},  {"North America", {-100.0, 40.0}},
                     {"South America", {-60.0, -20.0}},
                     {"Oceania", {140.0, -25.0}}};
    for (const auto& [name, origin] : positions) {
        const double x = origin.first, y = origin.second;
        if (!features.empty()) features += ",";
        features += "{\"type\":\"Feature\",\"properties\":{\"group\":\"" +
                    name + "\",\"class\":\"" + name +
                    "\"},\"geometry\":{\"type\":\"Polygon\","
                    "\"coordinates\":[[[" +
                    std::to_string(x) + "," + std::to_string(y) + "],[" +
                    std::to_string(x + 10) + "," + std::to_string(y) +
                    "],[" + std::to_string(x + 10) + "," +
                    std::to_string(y + 10) + "],[" + std::to_string(x) +
                    "," + std::to_string(y + 10) + "],[" +
                    std::to_string(x) + "," + std::to_string(y) + "]]]}}";
    }
    spit(path,
         "{\"type\":\"FeatureCollection\",\"features\":[" + features + "]}");
}

}  // namespace testsupport
