#pragma once

#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "geodiverse/errors.hpp"
#include "geodiverse/geotiff.hpp"
#include "geodiverse/ingest.hpp"

namespace geodiverse {

// Thin client for the two-endpoint catalog contract:
//   GET /search?bbox=<minlon,minlat,maxlon,maxlat>&datetime=<start/end>
//       &max_cloud=<pct>   -> JSON [{id, cloud_pct, datetime}]
//   GET /asset/<id>        -> GeoTIFF bytes
class RemoteCatalogSource : public TileSource {
  public:
    explicit RemoteCatalogSource(const std::string& base_url)
        : client_(base_url) {
        client_.set_connection_timeout(5);
        client_.set_read_timeout(30);
    }

    std::vector<SceneInfo> search(const TileRequest& request) override {
        std::ostringstream bbox;
        bbox.precision(10);
        bbox << request.lon << ',' << request.lat << ',' << request.lon
             << ',' << request.lat;
        httplib::Params params{
            {"bbox", bbox.str()},
            {"datetime", request.date_start + "/" + request.date_end},
            {"max_cloud", std::to_string(request.max_cloud_pct)}};
        const auto res = client_.Get("/search", params, httplib::Headers{});
        if (!res) {
            throw transient_source_error("catalog search unreachable: " +
                                         httplib::to_string(res.error()));
        }
        if (res->status >= 500) {
            throw transient_source_error("catalog search returned HTTP " +
                                         std::to_string(res->status));
        }
        if (res->status != 200) {
            throw source_error("catalog search returned HTTP " +
                               std::to_string(res->status));
        }
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw source_error(std::string("bad catalog response: ") +
                               e.what());
        }
        std::vector<SceneInfo> scenes;
        for (const auto& entry : doc) {
            scenes.push_back({entry.at("id").get<std::string>(),
                              entry.at("cloud_pct").get<double>(),
                              entry.value("datetime", "")});
        }
        return scenes;
    }

    RasterTile fetch(const std::string& scene_id) override {
        const auto res = client_.Get("/asset/" + scene_id);
        if (!res) {
            throw transient_source_error("asset fetch unreachable: " +
                                         httplib::to_string(res.error()));
        }
        if (res->status >= 500) {
            throw transient_source_error("asset fetch returned HTTP " +
                                         std::to_string(res->status));
        }
        if (res->status != 200) {
            throw source_error("asset fetch returned HTTP " +
                               std::to_string(res->status));
        }
        try {
            return tiff::decode(
                reinterpret_cast<const std::uint8_t*>(res->body.data()),
                res->body.size());
        } catch (const parse_error& e) {
            throw source_error(std::string("asset decode failed: ") +
                               e.what());
        }
    }

  private:
    httplib::Client client_;
};

}  // namespace geodiverse
