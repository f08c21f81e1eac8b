#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <thread>

#include "geodiverse/ingest.hpp"
#include "geodiverse/remote_source.hpp"
#include "test_support.hpp"

using namespace geodiverse;
using Catch::Matchers::WithinAbs;
using testsupport::TempDir;
using testsupport::make_sample;
using testsupport::make_tile;

namespace {

BandStats stats_one(const std::string& band, double mean, double std_) {
    BandStats s;
    s.bands[band] = {mean, std_};
    return s;
}

DatasetManifest ingest_manifest_fixture(std::size_t n) {
    DatasetManifest m;
    m.name = "ingest";
    m.groups = {"g"};
    m.allocation = {{"g"}, {1.0}};
    for (std::size_t i = 0; i < n; ++i) {
        m.samples.push_back(
            make_sample("s" + std::to_string(i), 10.0 + 0.01 * i, 10.0, "g"));
    }
    return m;
}

}  // namespace

TEST_CASE("normalize") {
    SECTION("mean-std examples map to -1, 0, 1") {
        RasterTile tile = make_tile(3, 1, 0.0f);
        tile.pixels = {100.0f, 350.0f, 600.0f};  // m-s, m, m+s
        const auto out = normalize(tile, stats_one("B1", 350.0, 250.0));
        CHECK(out.dtype == PixelType::F32);
        CHECK_THAT(out.pixels[0], WithinAbs(-1.0, 1e-6));
        CHECK_THAT(out.pixels[1], WithinAbs(0.0, 1e-6));
        CHECK_THAT(out.pixels[2], WithinAbs(1.0, 1e-6));
    }

    SECTION("identity stats leave values unchanged") {
        RasterTile tile = make_tile(4, 4, 0.0f);
        for (std::size_t i = 0; i < tile.pixels.size(); ++i) {
            tile.pixels[i] = static_cast<float>(i) * 0.5f;
        }
        const auto out = normalize(tile, stats_one("B1", 0.0, 1.0));
        CHECK(out.pixels == tile.pixels);
    }

    SECTION("nodata pixels become NaN and nodata is NaN") {
        RasterTile tile = make_tile(2, 1, 0.0f);
        tile.pixels = {0.0f, 5.0f};
        tile.nodata = 0.0;
        const auto out = normalize(tile, stats_one("B1", 1.0, 2.0));
        CHECK(std::isnan(out.pixels[0]));
        CHECK_THAT(out.pixels[1], WithinAbs(2.0, 1e-6));
        REQUIRE(out.nodata.has_value());
        CHECK(std::isnan(*out.nodata));
    }

    SECTION("missing band stats is a config error") {
        const RasterTile tile = make_tile(2, 2, 1.0f);
        CHECK_THROWS_AS(normalize(tile, stats_one("B9", 0.0, 1.0)),
                        config_error);
    }

    SECTION("non-positive std rejected") {
        const RasterTile tile = make_tile(2, 2, 1.0f);
        CHECK_THROWS_AS(normalize(tile, stats_one("B1", 0.0, 0.0)),
                        validation_error);
        CHECK_THROWS_AS(normalize(tile, stats_one("B1", 0.0, -1.0)),
                        validation_error);
    }

    SECTION("denormalize inverts within float rounding") {
        RasterTile tile = make_tile(8, 8, 0.0f);
        Rng rng(3);
        for (auto& p : tile.pixels) {
            p = static_cast<float>(rng.next_double() * 4000.0);
        }
        const auto stats = stats_one("B1", 1353.7, 246.1);
        const auto back = denormalize(normalize(tile, stats), stats);
        for (std::size_t i = 0; i < tile.pixels.size(); ++i) {
            // one round trip through z-score costs a few ULP at this scale
            CHECK(std::abs(back.pixels[i] - tile.pixels[i]) <=
                  4000.0 * std::pow(2.0, -23) * 4.0 + 1e-4);
        }
    }
}

TEST_CASE("band stats from JSON") {
    TempDir dir("bandstats");
    const auto path = (dir.path() / "stats.json").string();

    SECTION("well-formed file loads") {
        testsupport::spit(path,
                          R"({"B2": {"mean": 1353.7, "std": 246.1},
                              "B3": {"mean": 1117.2, "std": 338.0}})");
        const auto stats = BandStats::from_json_file(path);
        CHECK(stats.bands.at("B2").mean == 1353.7);
        CHECK(stats.bands.at("B3").std == 338.0);
    }

    SECTION("zero std rejected at load") {
        testsupport::spit(path, R"({"B2": {"mean": 1.0, "std": 0.0}})");
        CHECK_THROWS_AS(BandStats::from_json_file(path), validation_error);
    }

    SECTION("malformed JSON is a parse error") {
        testsupport::spit(path, "{nope");
        CHECK_THROWS_AS(BandStats::from_json_file(path), parse_error);
    }
}

TEST_CASE("fetch_tile scene selection") {
    TileRequest req;
    req.sample_id = "s0";
    req.max_cloud_pct = 20.0;
    req.size_px = {4, 4};

    SECTION("scene over the cloud bound is rejected") {
        MemoryCatalogSource source;
        source.add_scene({"cloudy", 25.0, "2024-03-01"},
                         make_tile(4, 4, 1.0f));
        CHECK_THROWS_AS(fetch_tile(req, source), cloud_filter_error);
    }

    SECTION("lowest cloud wins, then earliest date") {
        MemoryCatalogSource source;
        source.add_scene({"later-clear", 5.0, "2024-06-01"},
                         make_tile(4, 4, 1.0f));
        source.add_scene({"hazy", 15.0, "2024-01-01"},
                         make_tile(4, 4, 2.0f));
        source.add_scene({"early-clear", 5.0, "2024-02-01"},
                         make_tile(4, 4, 3.0f));
        const auto tile = fetch_tile(req, source);
        CHECK(tile.pixels[0] == 3.0f);
    }

    SECTION("exact-size scene passes through bit-identical") {
        MemoryCatalogSource source;
        RasterTile scene = make_tile(4, 4, 0.0f);
        for (std::size_t i = 0; i < scene.pixels.size(); ++i) {
            scene.pixels[i] = static_cast<float>(i) * 1.25f;
        }
        source.add_scene({"a", 0.0, "2024-01-01"}, scene);
        CHECK(fetch_tile(req, source).pixels == scene.pixels);
    }

    SECTION("larger scene is center-cropped with shifted origin") {
        MemoryCatalogSource source;
        RasterTile scene = make_tile(8, 8, 0.0f);
        for (std::size_t r = 0; r < 8; ++r) {
            for (std::size_t c = 0; c < 8; ++c) {
                scene.at(0, r, c) = static_cast<float>(r * 8 + c);
            }
        }
        source.add_scene({"a", 0.0, "2024-01-01"}, scene);
        const auto tile = fetch_tile(req, source);
        CHECK(tile.width == 4);
        CHECK(tile.height == 4);
        CHECK(tile.at(0, 0, 0) == scene.at(0, 2, 2));
        CHECK_THAT(tile.geotransform[0],
                   WithinAbs(scene.geotransform[0] + 2 * 0.01, 1e-12));
    }

    SECTION("no scenes is an availability error") {
        MemoryCatalogSource source;
        CHECK_THROWS_AS(fetch_tile(req, source), availability_error);
    }

    SECTION("invalid request window rejected before any source call") {
        TileRequest bad = req;
        bad.date_start = "2024-06-01";
        bad.date_end = "2024-01-01";
        MemoryCatalogSource source;
        CHECK_THROWS_AS(fetch_tile(bad, source), validation_error);
    }
}

TEST_CASE("retry policy") {
    struct FlakySource : TileSource {
        int failures_left;
        explicit FlakySource(int n) : failures_left(n) {}
        std::vector<SceneInfo> search(const TileRequest&) override {
            if (failures_left-- > 0) {
                throw transient_source_error("flaky");
            }
            return {{"a", 0.0, "2024-01-01"}};
        }
        RasterTile fetch(const std::string&) override {
            return testsupport::make_tile(4, 4, 1.0f);
        }
    };

    TileRequest req;
    req.sample_id = "s";
    req.size_px = {4, 4};
    RetryPolicy fast{3, std::chrono::milliseconds(1)};

    SECTION("two transient failures then success") {
        FlakySource source(2);
        CHECK_NOTHROW(fetch_tile(req, source, fast));
    }

    SECTION("persistent transient failure propagates after attempts") {
        FlakySource source(10);
        CHECK_THROWS_AS(fetch_tile(req, source, fast),
                        transient_source_error);
        CHECK(source.failures_left == 7);  // exactly 3 attempts consumed
    }
}

TEST_CASE("ingest_manifest") {
    TempDir dir("ingest");
    IngestOptions opts;
    opts.size_px = {4, 4};

    SECTION("empty manifest reports all zeros") {
        MemoryCatalogSource source;
        const auto [report, updated] = ingest_manifest(
            ingest_manifest_fixture(0), source, std::nullopt, dir.path(), 1,
            opts);
        CHECK(report.total() == 0);
        CHECK(updated.samples.empty());
    }

    SECTION("success writes tiles, checksums, and tile URIs") {
        const auto m = ingest_manifest_fixture(3);
        MemoryCatalogSource source;
        source.add_scene({"scene", 0.0, "2024-01-01"}, make_tile(4, 4, 7.0f));
        const auto [report, updated] =
            ingest_manifest(m, source, std::nullopt, dir.path(), 1, opts);
        CHECK(report.succeeded == 3);
        CHECK(report.total() == 3);
        for (const auto& s : updated.samples) {
            REQUIRE_FALSE(s.tile_uri.empty());
            CHECK(std::filesystem::exists(s.tile_uri));
            CHECK(std::filesystem::exists(s.tile_uri + ".sum"));
            CHECK(read_geotiff(s.tile_uri).pixels ==
                  std::vector<float>(16, 7.0f));
        }
    }

    SECTION("rerun skips intact outputs; corrupt output is refetched") {
        const auto m = ingest_manifest_fixture(3);
        MemoryCatalogSource source;
        source.add_scene({"scene", 0.0, "2024-01-01"}, make_tile(4, 4, 7.0f));
        const auto first =
            ingest_manifest(m, source, std::nullopt, dir.path(), 1, opts);
        CHECK(first.first.succeeded == 3);

        // corrupt one output in place
        testsupport::spit(dir.path() / "s1.tif", "damaged");
        const auto second =
            ingest_manifest(m, source, std::nullopt, dir.path(), 1, opts);
        CHECK(second.first.skipped == 2);
        CHECK(second.first.succeeded == 1);
        CHECK(second.second == first.second);
        CHECK(read_geotiff((dir.path() / "s1.tif").string()).pixels ==
              std::vector<float>(16, 7.0f));
    }

    SECTION("outcome counts conserve the manifest size") {
        // s0 succeeds, s1 has no matching scene dir, s2 is too cloudy
        DatasetManifest m = ingest_manifest_fixture(3);
        struct SplitSource : TileSource {
            std::vector<SceneInfo> search(const TileRequest& r) override {
                if (r.sample_id == "s0") return {{"ok", 0.0, "2024-01-01"}};
                if (r.sample_id == "s2") return {{"bad", 90.0, "2024-01-01"}};
                return {};
            }
            RasterTile fetch(const std::string&) override {
                return testsupport::make_tile(4, 4, 1.0f);
            }
        } source;
        const auto [report, updated] =
            ingest_manifest(m, source, std::nullopt, dir.path(), 1, opts);
        CHECK(report.succeeded == 1);
        CHECK(report.unavailable == 1);
        CHECK(report.cloud_rejected == 1);
        CHECK(report.total() == m.samples.size());
        CHECK(updated.samples[1].tile_uri.empty());
    }

    SECTION("normalization is applied when stats are given") {
        const auto m = ingest_manifest_fixture(1);
        MemoryCatalogSource source;
        source.add_scene({"scene", 0.0, "2024-01-01"},
                         make_tile(4, 4, 350.0f));
        const auto stats = stats_one("B1", 100.0, 125.0);
        const auto [report, updated] =
            ingest_manifest(m, source, stats, dir.path(), 1, opts);
        REQUIRE(report.succeeded == 1);
        const auto tile = read_geotiff(updated.samples[0].tile_uri);
        CHECK_THAT(tile.pixels[0], WithinAbs(2.0, 1e-6));
    }

    SECTION("parallelism 1 and 8 agree on report and outputs") {
        const auto m = ingest_manifest_fixture(20);
        MemoryCatalogSource source;
        source.add_scene({"scene", 0.0, "2024-01-01"}, make_tile(4, 4, 5.0f));
        TempDir serial("ingest-serial"), parallel("ingest-parallel");
        const auto a = ingest_manifest(m, source, std::nullopt,
                                       serial.path(), 1, opts);
        const auto b = ingest_manifest(m, source, std::nullopt,
                                       parallel.path(), 8, opts);
        CHECK(a.first.succeeded == b.first.succeeded);
        for (std::size_t i = 0; i < m.samples.size(); ++i) {
            CHECK(testsupport::slurp(a.second.samples[i].tile_uri) ==
                  testsupport::slurp(b.second.samples[i].tile_uri));
        }
    }

    SECTION("unwritable output directory fails up front") {
        MemoryCatalogSource source;
        CHECK_THROWS_AS(
            ingest_manifest(ingest_manifest_fixture(1), source, std::nullopt,
                            "/proc/geodiverse-no-such-dir", 1, opts),
            persistence_error);
    }

    SECTION("local directory source round trip") {
        TempDir store("ingest-store");
        RasterTile fixture = make_tile(4, 4, 9.0f);
        write_geotiff(fixture, (store.path() / "s0.tif").string());
        LocalDirectorySource source(store.path());
        auto m = ingest_manifest_fixture(2);  // s1 has no file
        const auto [report, updated] =
            ingest_manifest(m, source, std::nullopt, dir.path(), 1, opts);
        CHECK(report.succeeded == 1);
        CHECK(report.unavailable == 1);
    }
}

TEST_CASE("remote catalog source") {
    IngestOptions opts;
    opts.size_px = {4, 4};
    opts.retry = {2, std::chrono::milliseconds(1)};

    SECTION("serves search and assets over HTTP") {
        RasterTile scene = testsupport::make_tile(4, 4, 3.5f);
        const auto body = tiff::encode(scene);
        httplib::Server server;
        server.Get("/search", [](const httplib::Request& req,
                                 httplib::Response& res) {
            REQUIRE(req.has_param("bbox"));
            REQUIRE(req.has_param("datetime"));
            res.set_content(
                R"([{"id":"sc1","cloud_pct":3.0,"datetime":"2024-02-01"}])",
                "application/json");
        });
        server.Get("/asset/sc1", [&](const httplib::Request&,
                                     httplib::Response& res) {
            res.set_content(
                std::string(reinterpret_cast<const char*>(body.data()),
                            body.size()),
                "image/tiff");
        });
        const int port = 18231;
        std::thread run([&] { server.listen("127.0.0.1", port); });
        server.wait_until_ready();

        RemoteCatalogSource source("http://127.0.0.1:" +
                                   std::to_string(port));
        TileRequest req;
        req.sample_id = "s0";
        req.size_px = {4, 4};
        const auto tile = fetch_tile(req, source, opts.retry);
        CHECK(tile.pixels == scene.pixels);

        server.stop();
        run.join();
    }

    SECTION("unreachable endpoint counts as unavailable in ingest") {
        TempDir dir("ingest-dead");
        RemoteCatalogSource source("http://127.0.0.1:1");  // nothing there
        const auto [report, updated] = ingest_manifest(
            ingest_manifest_fixture(2), source, std::nullopt, dir.path(), 1,
            opts);
        CHECK(report.unavailable == 2);
        CHECK(report.total() == 2);
    }
}
