#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "geodiverse/errors.hpp"

namespace geodiverse {

// Flat key=value configuration ('#' starts a comment). Flags override any
// key; GEODIVERSE_CONFIG supplies the path when --config is absent.
struct Config {
    std::string continents_path;
    std::string biomes_path;
    std::string landcover_path;
    std::string landcover_legend_path;
    std::string tile_source;  // "local:<dir>" or "http://host[:port]"
    std::string band_stats_path;
    std::size_t histogram_bins = 100;
    std::string log_base = "e";
    std::string out_dir = ".";
    std::size_t parallelism = 1;
    std::uint64_t seed = 0;

    void apply(const std::string& key, const std::string& value) {
        if (key == "continents") {
            continents_path = value;
        } else if (key == "biomes") {
            biomes_path = value;
        } else if (key == "landcover") {
            landcover_path = value;
        } else if (key == "landcover_legend") {
            landcover_legend_path = value;
        } else if (key == "tile_source") {
            tile_source = value;
        } else if (key == "band_stats") {
            band_stats_path = value;
        } else if (key == "histogram_bins") {
            histogram_bins = std::stoul(value);
        } else if (key == "log_base") {
            log_base = value;
        } else if (key == "out_dir") {
            out_dir = value;
        } else if (key == "parallelism") {
            parallelism = std::stoul(value);
        } else if (key == "seed") {
            seed = std::stoull(value);
        } else {
            throw config_error("unknown config key: " + key);
        }
    }

    void validate() const {
        if (parallelism < 1) {
            throw config_error("parallelism must be >= 1");
        }
        if (log_base != "e" && log_base != "2" && log_base != "10") {
            throw config_error("log_base must be e, 2, or 10");
        }
        for (const std::string& path :
             {continents_path, biomes_path, landcover_path,
              landcover_legend_path, band_stats_path}) {
            if (!path.empty() && !std::filesystem::exists(path)) {
                throw config_error("configured path does not exist: " + path);
            }
        }
    }

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw config_error("cannot open config file: " + path);
        Config cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const auto start = line.find_first_not_of(" \t\r");
            if (start == std::string::npos) continue;
            const auto end = line.find_last_not_of(" \t\r");
            line = line.substr(start, end - start + 1);
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw config_error(path + ":" + std::to_string(line_no) +
                                   ": expected key=value");
            }
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t");
                const auto b = s.find_last_not_of(" \t");
                return a == std::string::npos ? std::string()
                                              : s.substr(a, b - a + 1);
            };
            cfg.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return cfg;
    }
};

}  // namespace geodiverse
