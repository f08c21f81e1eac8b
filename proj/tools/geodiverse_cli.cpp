#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "geodiverse/analysis.hpp"
#include "geodiverse/config.hpp"
#include "geodiverse/diversity.hpp"
#include "geodiverse/errors.hpp"
#include "geodiverse/ingest.hpp"
#include "geodiverse/manifest.hpp"
#include "geodiverse/overlay.hpp"
#include "geodiverse/remote_source.hpp"
#include "geodiverse/sampler.hpp"

namespace gd = geodiverse;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSaturation = 3;
constexpr int kExitIo = 4;

void log_line(const std::string& message) {
    std::cerr << "[geodiverse] " << message << "\n";
}

gd::Config load_config(const std::string& config_flag) {
    std::string path = config_flag;
    if (path.empty()) {
        if (const char* env = std::getenv("GEODIVERSE_CONFIG")) path = env;
    }
    gd::Config cfg;
    if (!path.empty()) cfg = gd::Config::from_file(path);
    return cfg;
}

gd::LogBase parse_log_base(const std::string& name) {
    if (name == "2") return gd::LogBase::two;
    if (name == "10") return gd::LogBase::ten;
    return gd::LogBase::natural;
}

// --alpha forms: "global", "one-hot:<group>", or "A=0.5,B=0.5"
gd::AllocationVector parse_alpha(const std::string& text,
                                 const gd::RegionSet& regions) {
    std::vector<std::string> groups;
    for (const auto& [name, _] : regions.regions) groups.push_back(name);
    if (text == "global") return gd::AllocationVector::uniform(groups);
    if (text.rfind("one-hot:", 0) == 0) {
        return gd::AllocationVector::one_hot(groups, text.substr(8));
    }
    gd::AllocationVector alpha;
    std::stringstream ss(text);
    std::string pair;
    while (std::getline(ss, pair, ',')) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos) {
            throw gd::validation_error("bad --alpha entry: " + pair);
        }
        alpha.groups.push_back(pair.substr(0, eq));
        alpha.weights.push_back(std::stod(pair.substr(eq + 1)));
    }
    alpha.validate();
    return alpha;
}

std::unique_ptr<gd::TileSource> open_tile_source(const std::string& spec) {
    if (spec.rfind("local:", 0) == 0) {
        return std::make_unique<gd::LocalDirectorySource>(spec.substr(6));
    }
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
        return std::make_unique<gd::RemoteCatalogSource>(spec);
    }
    throw gd::config_error("tile_source must be local:<dir> or an http URL");
}

std::vector<gd::RasterTile> load_tiles(const std::string& manifest_path,
                                       const std::string& tile_dir) {
    std::vector<gd::RasterTile> tiles;
    if (!tile_dir.empty()) {
        std::vector<fs::path> paths;
        for (const auto& entry : fs::directory_iterator(tile_dir)) {
            if (entry.path().extension() == ".tif") {
                paths.push_back(entry.path());
            }
        }
        std::sort(paths.begin(), paths.end());
        for (const auto& path : paths) {
            tiles.push_back(gd::read_geotiff(path.string()));
        }
    } else {
        const auto manifest = gd::read_manifest(manifest_path);
        for (const auto& sample : manifest.samples) {
            if (sample.tile_uri.empty()) continue;
            tiles.push_back(gd::read_geotiff(sample.tile_uri));
        }
    }
    if (tiles.empty()) {
        throw gd::degenerate_input_error("no tiles found to audit");
    }
    return tiles;
}

int run(int argc, char** argv) {
    CLI::App app{"geodiverse: spatially controlled pretraining-dataset "
                 "construction and diversity auditing"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "key=value config file");

    // sample
    auto* sample = app.add_subcommand(
        "sample", "draw a coordinate manifest under an allocation vector");
    std::string alpha_text = "global", sample_out = "manifest.jsonl";
    std::string regions_path, manifest_name = "sample";
    std::size_t sample_n = 0;
    std::uint64_t sample_seed = 0;
    double min_sep = 0.0;
    bool strict_regions = false;
    sample->add_option("--alpha", alpha_text,
                       "global | one-hot:<group> | name=weight,...");
    sample->add_option("--n", sample_n, "number of points")->required();
    sample->add_option("--seed", sample_seed, "RNG seed");
    sample->add_option("--min-sep", min_sep,
                       "minimum pairwise separation in meters");
    sample->add_option("--regions", regions_path,
                       "GeoJSON region set (overrides config continents)");
    sample->add_option("--out", sample_out, "output manifest path");
    sample->add_option("--name", manifest_name, "manifest name");
    sample->add_flag("--strict-regions", strict_regions,
                     "reject overlapping region polygons");

    // ingest
    auto* ingest = app.add_subcommand(
        "ingest", "download, normalize, and store tiles for a manifest");
    std::string ingest_manifest_path, ingest_out_dir;
    std::size_t tile_px = 96;
    double max_cloud = 20.0;
    ingest->add_option("--manifest", ingest_manifest_path)->required();
    ingest->add_option("--out-dir", ingest_out_dir)->required();
    ingest->add_option("--tile-px", tile_px, "tile edge length in pixels");
    ingest->add_option("--max-cloud", max_cloud,
                       "maximum scene cloud cover percent");

    // audit
    auto* audit = app.add_subcommand(
        "audit", "compute diversity measures for a dataset");
    std::string audit_manifest_path, audit_tile_dir, dataset_name;
    std::string measures_text =
        "continent,biome,landcover,spectral,per-band,sample-biome,"
        "sample-landcover";
    std::string report_out = "report.json", report_csv;
    audit->add_option("--manifest", audit_manifest_path);
    audit->add_option("--tile-dir", audit_tile_dir);
    audit->add_option("--measures", measures_text, "comma-separated list");
    audit->add_option("--dataset-name", dataset_name);
    audit->add_option("--out", report_out, "report JSON path");
    audit->add_option("--csv", report_csv, "report CSV path");

    // analyze
    auto* analyze = app.add_subcommand(
        "analyze", "rank datasets and correlate diversity with scores");
    std::string scores_path, analyze_out = "analysis";
    std::vector<std::string> report_paths;
    std::string p_method = "t";
    bool raw_means = false;
    std::size_t permutations = 1000000;
    analyze->add_option("--scores", scores_path, "score table CSV")
        ->required();
    analyze->add_option("--reports", report_paths,
                        "diversity report JSON files");
    analyze->add_option("--out", analyze_out, "output directory");
    analyze->add_option("--p-method", p_method, "t | permutation");
    analyze->add_option("--permutations", permutations);
    analyze->add_flag("--raw-means", raw_means,
                      "average raw task scores instead of min-max scaled");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    gd::Config cfg = load_config(config_path);
    cfg.validate();

    if (sample->parsed()) {
        const std::string region_file =
            !regions_path.empty() ? regions_path : cfg.continents_path;
        if (region_file.empty()) {
            throw gd::config_error(
                "no region set: pass --regions or configure continents=");
        }
        gd::RegionSet regions = gd::RegionSet::from_geojson(region_file);
        if (strict_regions) regions.check_exclusive();
        const auto alpha = parse_alpha(alpha_text, regions);
        std::optional<double> separation;
        if (min_sep > 0.0) separation = min_sep;
        const auto manifest =
            gd::sample_points(regions, alpha, sample_n, sample_seed,
                              separation, manifest_name);
        gd::write_manifest(manifest, sample_out);
        nlohmann::ordered_json counts;
        for (const auto& [group, count] :
             gd::allocate_counts(alpha, sample_n)) {
            counts[group] = count;
        }
        std::cout << counts.dump() << "\n";
        log_line("wrote " + std::to_string(manifest.samples.size()) +
                 " points to " + sample_out);
        return kExitOk;
    }

    if (ingest->parsed()) {
        if (cfg.tile_source.empty()) {
            throw gd::config_error("tile_source not configured");
        }
        const auto manifest = gd::read_manifest(ingest_manifest_path);
        auto source = open_tile_source(cfg.tile_source);
        std::optional<gd::BandStats> stats;
        if (!cfg.band_stats_path.empty()) {
            stats = gd::BandStats::from_json_file(cfg.band_stats_path);
        }
        gd::IngestOptions options;
        options.size_px = {tile_px, tile_px};
        options.max_cloud_pct = max_cloud;
        const auto [report, updated] =
            gd::ingest_manifest(manifest, *source, stats, ingest_out_dir,
                                cfg.parallelism, options);
        gd::write_manifest(updated,
                           fs::path(ingest_out_dir) / "manifest.jsonl");
        std::cout << report.to_json().dump() << "\n";
        return kExitOk;
    }

    if (audit->parsed()) {
        const gd::LogBase base = parse_log_base(cfg.log_base);
        gd::HistogramSpec spec;
        spec.bin_count = cfg.histogram_bins;
        gd::DiversityReport report;
        report.bin_count = spec.bin_count;
        report.log_base = base;
        report.dataset = !dataset_name.empty()
                             ? dataset_name
                             : fs::path(audit_manifest_path.empty()
                                            ? audit_tile_dir
                                            : audit_manifest_path)
                                   .stem()
                                   .string();

        std::set<std::string> measures;
        {
            std::stringstream ss(measures_text);
            std::string m;
            while (std::getline(ss, m, ',')) measures.insert(m);
        }

        std::optional<std::vector<gd::RasterTile>> tiles;
        auto need_tiles = [&]() -> const std::vector<gd::RasterTile>& {
            if (!tiles) {
                tiles = load_tiles(audit_manifest_path, audit_tile_dir);
            }
            return *tiles;
        };

        if (measures.contains("continent")) {
            if (audit_manifest_path.empty()) {
                throw gd::config_error(
                    "continent measure needs --manifest");
            }
            const auto manifest = gd::read_manifest(audit_manifest_path);
            std::optional<gd::RegionMap> continents;
            if (!cfg.continents_path.empty()) {
                continents =
                    gd::RegionMap::from_geojson(cfg.continents_path);
            }
            const auto result = gd::continent_diversity(
                manifest, continents ? &*continents : nullptr,
                /*strict=*/false, base);
            report.h_continent = result.entropy;
            report.sample_count = manifest.samples.size();
            if (result.excluded > 0) {
                log_line(std::to_string(result.excluded) +
                         " samples outside every continent were excluded");
            }
        }
        auto area_measures = [&](const gd::RegionMap& map,
                                 std::optional<double>& dataset_slot,
                                 std::optional<double>& sample_slot,
                                 bool want_dataset, bool want_sample) {
            std::vector<gd::AreaVector> areas;
            for (const auto& tile : need_tiles()) {
                try {
                    areas.push_back(
                        gd::area_vector(gd::footprint(tile), map));
                } catch (const gd::no_overlap_error&) {
                    areas.push_back(gd::AreaVector{});
                }
            }
            if (want_dataset) {
                dataset_slot = gd::class_area_diversity(areas, base);
            }
            if (want_sample) {
                sample_slot =
                    gd::sample_class_diversity(areas, base).mean_entropy;
            }
        };
        if (measures.contains("biome") || measures.contains("sample-biome")) {
            if (cfg.biomes_path.empty()) {
                throw gd::config_error("biomes map not configured");
            }
            const auto map = gd::RegionMap::from_geojson(cfg.biomes_path);
            area_measures(map, report.h_biome, report.sample_biome_entropy,
                          measures.contains("biome"),
                          measures.contains("sample-biome"));
        }
        if (measures.contains("landcover") ||
            measures.contains("sample-landcover")) {
            if (cfg.landcover_path.empty()) {
                throw gd::config_error("landcover map not configured");
            }
            const auto map = gd::RegionMap::from_raster(
                cfg.landcover_path, cfg.landcover_legend_path);
            area_measures(map, report.h_landcover,
                          report.sample_landcover_entropy,
                          measures.contains("landcover"),
                          measures.contains("sample-landcover"));
        }
        if (measures.contains("spectral") || measures.contains("per-band")) {
            const auto result =
                gd::spectral_entropy_dataset(need_tiles(), spec, base);
            if (measures.contains("spectral")) {
                report.h_spectral = result.mean;
            }
            if (measures.contains("per-band")) {
                report.per_band_entropy = result.per_band_mean;
            }
            if (report.sample_count == 0) {
                report.sample_count = result.sample_count;
            }
        }
        if (report.sample_count == 0 && tiles) {
            report.sample_count = tiles->size();
        }

        {
            std::ofstream out(report_out, std::ios::binary | std::ios::trunc);
            if (!out) {
                throw gd::persistence_error("cannot write " + report_out);
            }
            out << report.to_json().dump(2) << "\n";
        }
        const std::string csv_path =
            report_csv.empty() ? report_out + ".csv" : report_csv;
        {
            std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
            if (!out) {
                throw gd::persistence_error("cannot write " + csv_path);
            }
            out << gd::DiversityReport::csv_header() << "\n"
                << report.csv_row() << "\n";
        }
        log_line("wrote " + report_out + " and " + csv_path);
        return kExitOk;
    }

    if (analyze->parsed()) {
        const auto table = gd::ScoreTable::from_csv(scores_path);
        const auto ranks = gd::rank_datasets(table);
        std::map<std::string, gd::CorrelationResult> correlations;
        if (!report_paths.empty()) {
            std::vector<gd::DiversityReport> reports;
            for (const auto& path : report_paths) {
                std::ifstream in(path);
                if (!in) {
                    throw gd::persistence_error("cannot open report: " + path);
                }
                nlohmann::json doc;
                in >> doc;
                reports.push_back(gd::DiversityReport::from_json(doc));
            }
            gd::CorrelateOptions options;
            options.normalize_tasks = !raw_means;
            options.method = p_method == "permutation"
                                 ? gd::PValueMethod::permutation
                                 : gd::PValueMethod::t_approximation;
            options.seed = cfg.seed;
            options.permutations = permutations;
            std::vector<gd::DiversityMeasure> wanted;
            for (auto m : {gd::DiversityMeasure::continent,
                           gd::DiversityMeasure::biome,
                           gd::DiversityMeasure::landcover,
                           gd::DiversityMeasure::spectral,
                           gd::DiversityMeasure::sample_biome,
                           gd::DiversityMeasure::sample_landcover}) {
                const bool any = std::any_of(
                    reports.begin(), reports.end(),
                    [&](const gd::DiversityReport& r) {
                        return gd::measure_value(r, m).has_value();
                    });
                if (any) wanted.push_back(m);
            }
            correlations =
                gd::correlate_diversity(reports, table, wanted, options);
        }
        gd::emit_report(ranks, correlations, analyze_out);
        log_line("wrote analysis artifacts to " + analyze_out);
        return kExitOk;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const gd::saturation_error& e) {
        std::cerr << "error: " << e.what() << " (achieved "
                  << e.achieved_count << ")\n";
        return kExitSaturation;
    } catch (const gd::persistence_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const gd::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
