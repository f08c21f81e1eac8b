#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "geodiverse/errors.hpp"
#include "geodiverse/geotiff.hpp"
#include "geodiverse/manifest.hpp"
#include "geodiverse/rng.hpp"

namespace geodiverse {

// Per-band normalization constants in sensor units.
struct BandStats {
    struct MeanStd {
        double mean = 0.0;
        double std = 1.0;
    };
    std::map<std::string, MeanStd> bands;

    void validate() const {
        for (const auto& [band, ms] : bands) {
            if (ms.std <= 0.0) {
                throw validation_error("band '" + band +
                                       "' has std <= 0");
            }
        }
    }

    // JSON map: {"B2": {"mean": 1353.7, "std": 246.1}, ...}
    static BandStats from_json_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw persistence_error("cannot open band stats: " + path);
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(path + ": " + e.what());
        }
        BandStats stats;
        for (const auto& [band, entry] : doc.items()) {
            stats.bands[band] = {entry.at("mean").get<double>(),
                                 entry.at("std").get<double>()};
        }
        stats.validate();
        return stats;
    }
};

struct TileRequest {
    std::string sample_id;
    double lat = 0.0;
    double lon = 0.0;
    std::pair<std::size_t, std::size_t> size_px{96, 96};
    std::string date_start;  // ISO-8601, inclusive
    std::string date_end;
    double max_cloud_pct = 20.0;

    void validate() const {
        if (size_px.first == 0 || size_px.second == 0) {
            throw validation_error("tile size must be positive");
        }
        if (!date_start.empty() && !date_end.empty() &&
            date_end < date_start) {
            throw validation_error("empty date window");
        }
    }
};

struct SceneInfo {
    std::string id;
    double cloud_pct = 0.0;
    std::string acquisition_date;
};

// Scene failures that deserve a retry (network hiccups, 5xx) are raised
// as transient_source_error; anything else fails immediately.
struct transient_source_error : source_error {
    using source_error::source_error;
};

class TileSource {
  public:
    virtual ~TileSource() = default;
    // Candidate scenes for the request window; cloud filtering happens in
    // fetch_tile so sources may return everything they know.
    virtual std::vector<SceneInfo> search(const TileRequest& request) = 0;
    virtual RasterTile fetch(const std::string& scene_id) = 0;
};

struct RetryPolicy {
    std::size_t attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
};

namespace detail {

template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) {
    std::chrono::milliseconds backoff = policy.initial_backoff;
    for (std::size_t attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const transient_source_error&) {
            if (attempt >= policy.attempts) throw;
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
}

inline RasterTile center_crop(RasterTile tile, std::size_t out_h,
                              std::size_t out_w) {
    if (tile.height == out_h && tile.width == out_w) return tile;
    if (tile.height < out_h || tile.width < out_w) {
        throw source_error("scene smaller than requested tile size");
    }
    const std::size_t row0 = (tile.height - out_h) / 2;
    const std::size_t col0 = (tile.width - out_w) / 2;
    RasterTile out = tile;
    out.height = out_h;
    out.width = out_w;
    out.pixels.assign(tile.band_count() * out_h * out_w, 0.0f);
    for (std::size_t b = 0; b < tile.band_count(); ++b) {
        for (std::size_t r = 0; r < out_h; ++r) {
            for (std::size_t c = 0; c < out_w; ++c) {
                out.at(b, r, c) = tile.at(b, row0 + r, col0 + c);
            }
        }
    }
    const auto [x, y] = tile.pixel_to_crs(static_cast<double>(col0),
                                          static_cast<double>(row0));
    out.geotransform[0] = x;
    out.geotransform[3] = y;
    return out;
}

}  // namespace detail

// Scene selection + download for one request. Tie-break within the date
// window: lowest cloud cover, then earliest acquisition.
inline RasterTile fetch_tile(const TileRequest& request, TileSource& source,
                             const RetryPolicy& retry = {}) {
    request.validate();
    const auto scenes = detail::with_retries(
        retry, [&] { return source.search(request); });
    if (scenes.empty()) {
        throw availability_error("no scene for sample '" + request.sample_id +
                                 "' in the requested window");
    }
    const SceneInfo* best = nullptr;
    for (const SceneInfo& scene : scenes) {
        if (scene.cloud_pct > request.max_cloud_pct) continue;
        if (best == nullptr || scene.cloud_pct < best->cloud_pct ||
            (scene.cloud_pct == best->cloud_pct &&
             scene.acquisition_date < best->acquisition_date)) {
            best = &scene;
        }
    }
    if (best == nullptr) {
        throw cloud_filter_error(
            "sample '" + request.sample_id + "': every scene exceeds " +
            std::to_string(request.max_cloud_pct) + "% cloud cover");
    }
    RasterTile tile = detail::with_retries(
        retry, [&] { return source.fetch(best->id); });
    return detail::center_crop(std::move(tile), request.size_px.first,
                               request.size_px.second);
}

// Per-band z-score to float32; nodata pixels become NaN.
inline RasterTile normalize(const RasterTile& tile, const BandStats& stats) {
    stats.validate();
    RasterTile out = tile;
    out.dtype = PixelType::F32;
    const std::size_t n = tile.pixels_per_band();
    for (std::size_t b = 0; b < tile.band_count(); ++b) {
        const auto it = stats.bands.find(tile.bands[b]);
        if (it == stats.bands.end()) {
            throw config_error("no normalization stats for band '" +
                               tile.bands[b] + "'");
        }
        const float mean = static_cast<float>(it->second.mean);
        const float inv_std = static_cast<float>(1.0 / it->second.std);
        for (std::size_t i = 0; i < n; ++i) {
            const float v = tile.pixels[b * n + i];
            if (tile.nodata && static_cast<double>(v) == *tile.nodata) {
                out.pixels[b * n + i] =
                    std::numeric_limits<float>::quiet_NaN();
            } else {
                out.pixels[b * n + i] = (v - mean) * inv_std;
            }
        }
    }
    out.nodata = std::numeric_limits<double>::quiet_NaN();
    return out;
}

inline RasterTile denormalize(const RasterTile& tile,
                              const BandStats& stats) {
    stats.validate();
    RasterTile out = tile;
    const std::size_t n = tile.pixels_per_band();
    for (std::size_t b = 0; b < tile.band_count(); ++b) {
        const auto it = stats.bands.find(tile.bands[b]);
        if (it == stats.bands.end()) {
            throw config_error("no normalization stats for band '" +
                               tile.bands[b] + "'");
        }
        const float mean = static_cast<float>(it->second.mean);
        const float std_ = static_cast<float>(it->second.std);
        for (std::size_t i = 0; i < n; ++i) {
            out.pixels[b * n + i] = tile.pixels[b * n + i] * std_ + mean;
        }
    }
    out.nodata = std::nullopt;
    return out;
}

// --- sources ---------------------------------------------------------------

// Offline store: a directory of GeoTIFFs named <sample id>.tif.
class LocalDirectorySource : public TileSource {
  public:
    explicit LocalDirectorySource(std::filesystem::path root)
        : root_(std::move(root)) {}

    std::vector<SceneInfo> search(const TileRequest& request) override {
        const auto path = root_ / (request.sample_id + ".tif");
        if (!std::filesystem::exists(path)) return {};
        return {{request.sample_id, 0.0, ""}};
    }

    RasterTile fetch(const std::string& scene_id) override {
        try {
            return read_geotiff((root_ / (scene_id + ".tif")).string());
        } catch (const parse_error& e) {
            throw source_error(e.what());
        } catch (const persistence_error& e) {
            throw source_error(e.what());
        }
    }

  private:
    std::filesystem::path root_;
};

// In-memory catalog, used by tests and as the reference for the source
// contract semantics.
class MemoryCatalogSource : public TileSource {
  public:
    void add_scene(SceneInfo info, RasterTile tile) {
        tiles_[info.id] = std::move(tile);
        scenes_.push_back(std::move(info));
    }

    std::vector<SceneInfo> search(const TileRequest&) override {
        return scenes_;
    }

    RasterTile fetch(const std::string& scene_id) override {
        const auto it = tiles_.find(scene_id);
        if (it == tiles_.end()) {
            throw source_error("unknown scene id: " + scene_id);
        }
        return it->second;
    }

  private:
    std::vector<SceneInfo> scenes_;
    std::map<std::string, RasterTile> tiles_;
};

// --- manifest-scale ingestion ----------------------------------------------

struct IngestOptions {
    std::pair<std::size_t, std::size_t> size_px{96, 96};
    std::string date_start = "2024-01-01";
    std::string date_end = "2024-12-31";
    double max_cloud_pct = 20.0;
    RetryPolicy retry;
};

struct IngestReport {
    std::size_t succeeded = 0;
    std::size_t cloud_rejected = 0;
    std::size_t unavailable = 0;
    std::size_t failed = 0;
    std::size_t skipped = 0;

    std::size_t total() const {
        return succeeded + cloud_rejected + unavailable + failed + skipped;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["succeeded"] = succeeded;
        j["cloud_rejected"] = cloud_rejected;
        j["unavailable"] = unavailable;
        j["failed"] = failed;
        j["skipped"] = skipped;
        j["total"] = total();
        return j;
    }
};

namespace detail {

inline std::uint64_t file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw persistence_error("cannot open: " + path.string());
    std::uint64_t h = 1469598103934665603ULL;
    char buf[8192];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    return h;
}

inline std::filesystem::path checksum_path(
    const std::filesystem::path& tif) {
    return tif.string() + ".sum";
}

inline bool output_intact(const std::filesystem::path& tif) {
    const auto sum = checksum_path(tif);
    if (!std::filesystem::exists(tif) || !std::filesystem::exists(sum)) {
        return false;
    }
    std::ifstream in(sum);
    std::uint64_t recorded = 0;
    in >> recorded;
    return in && recorded == file_checksum(tif);
}

}  // namespace detail

// Fetch + optional normalize + write for every manifest sample. Failures
// are per-sample data, not process failures; a rerun skips samples whose
// output file still matches its recorded checksum. Samples are processed
// by a worker pool but reduced in manifest order, so the updated manifest
// and report are identical at any parallelism.
inline std::pair<IngestReport, DatasetManifest> ingest_manifest(
    const DatasetManifest& manifest, TileSource& source,
    const std::optional<BandStats>& stats,
    const std::filesystem::path& out_dir, std::size_t parallelism = 1,
    const IngestOptions& options = {}) {
    if (parallelism < 1) throw validation_error("parallelism must be >= 1");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    {
        const auto probe = out_dir / ".write-probe";
        std::ofstream test(probe);
        if (!test) {
            throw persistence_error("output directory not writable: " +
                                    out_dir.string());
        }
        test.close();
        std::filesystem::remove(probe, ec);
    }

    enum class Outcome { ok, cloud, unavailable, failed, skipped };
    struct SampleResult {
        Outcome outcome = Outcome::failed;
        std::string tile_uri;
    };
    std::vector<SampleResult> results(manifest.samples.size());

    auto process = [&](std::size_t index) {
        const GeoSample& sample = manifest.samples[index];
        const auto tif = out_dir / (sample.id + ".tif");
        SampleResult& result = results[index];
        if (detail::output_intact(tif)) {
            result = {Outcome::skipped, tif.string()};
            return;
        }
        TileRequest request;
        request.sample_id = sample.id;
        request.lat = sample.lat;
        request.lon = sample.lon;
        request.size_px = options.size_px;
        request.date_start = options.date_start;
        request.date_end = options.date_end;
        request.max_cloud_pct = options.max_cloud_pct;
        try {
            RasterTile tile = fetch_tile(request, source, options.retry);
            if (stats) tile = normalize(tile, *stats);
            write_geotiff(tile, tif.string());
            std::ofstream sum(detail::checksum_path(tif));
            sum << detail::file_checksum(tif) << '\n';
            result = {Outcome::ok, tif.string()};
        } catch (const cloud_filter_error&) {
            result.outcome = Outcome::cloud;
        } catch (const availability_error&) {
            result.outcome = Outcome::unavailable;
        } catch (const source_error&) {
            // unreachable or misbehaving source: the data may exist, we
            // just could not get it
            result.outcome = Outcome::unavailable;
        } catch (const std::exception&) {
            result.outcome = Outcome::failed;
        }
    };

    if (parallelism == 1 || manifest.samples.size() <= 1) {
        for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
            process(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        const std::size_t n_workers =
            std::min(parallelism, manifest.samples.size());
        for (std::size_t w = 0; w < n_workers; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1);
                     i < manifest.samples.size(); i = next.fetch_add(1)) {
                    process(i);
                }
            });
        }
        for (auto& t : workers) t.join();
    }

    IngestReport report;
    DatasetManifest updated = manifest;
    for (std::size_t i = 0; i < results.size(); ++i) {
        switch (results[i].outcome) {
            case Outcome::ok:
                ++report.succeeded;
                updated.samples[i].tile_uri = results[i].tile_uri;
                break;
            case Outcome::skipped:
                ++report.skipped;
                updated.samples[i].tile_uri = results[i].tile_uri;
                break;
            case Outcome::cloud:
                ++report.cloud_rejected;
                break;
            case Outcome::unavailable:
                ++report.unavailable;
                break;
            case Outcome::failed:
                ++report.failed;
                break;
        }
    }
    return {report, std::move(updated)};
}

}  // namespace geodiverse
