#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "geodiverse/errors.hpp"
#include "geodiverse/geotiff.hpp"
#include "geodiverse/manifest.hpp"
#include "geodiverse/overlay.hpp"

namespace geodiverse {

enum class LogBase { natural, two, ten };

inline double log_divisor(LogBase base) {
    switch (base) {
        case LogBase::two:
            return std::numbers::ln2;
        case LogBase::ten:
            return std::numbers::ln10;
        default:
            return 1.0;
    }
}

inline std::string log_base_name(LogBase base) {
    switch (base) {
        case LogBase::two:
            return "2";
        case LogBase::ten:
            return "10";
        default:
            return "e";
    }
}

// Kahan compensated accumulator; keeps entropy sums reproducible to 1e-12
// regardless of term count.
class KahanSum {
  public:
    void add(double value) {
        const double y = value - compensation_;
        const double t = sum_ + y;
        compensation_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

  private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
};

struct Distribution {
    std::vector<std::string> labels;
    std::vector<double> probs;

    void validate() const {
        if (labels.size() != probs.size()) {
            throw validation_error("distribution labels/probs mismatch");
        }
        KahanSum sum;
        for (double p : probs) {
            if (p < 0.0) throw validation_error("negative probability");
            sum.add(p);
        }
        if (std::abs(sum.value() - 1.0) > 1e-9) {
            throw validation_error("probabilities sum to " +
                                   std::to_string(sum.value()));
        }
    }
};

// -sum p log p with 0 log 0 := 0, in the requested base.
inline double shannon_entropy(const Distribution& d,
                              LogBase base = LogBase::natural) {
    d.validate();
    KahanSum acc;
    for (double p : d.probs) {
        if (p > 0.0) acc.add(-p * std::log(p));
    }
    return std::max(acc.value(), 0.0) / log_divisor(base);
}

// Entropy of a count vector via H = log(N) - (1/N) sum h log h.
inline double entropy_of_counts(const std::vector<std::uint64_t>& counts,
                                LogBase base = LogBase::natural) {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) throw degenerate_input_error("empty count vector");
    KahanSum acc;
    for (auto c : counts) {
        if (c > 0) {
            acc.add(static_cast<double>(c) * std::log(static_cast<double>(c)));
        }
    }
    const double n = static_cast<double>(total);
    const double h = std::log(n) - acc.value() / n;
    return std::max(h, 0.0) / log_divisor(base);
}

struct HistogramSpec {
    std::size_t bin_count = 100;
    // per-sample-per-band min-max unless a fixed range is set per band
    std::map<std::string, std::pair<double, double>> fixed_range;

    void validate() const {
        if (bin_count < 2) throw validation_error("bin_count must be >= 2");
        for (const auto& [band, range] : fixed_range) {
            if (range.first >= range.second) {
                throw validation_error("fixed range for band '" + band +
                                       "' has lo >= hi");
            }
        }
    }
};

// --- continent diversity ---------------------------------------------------

struct ContinentDiversityResult {
    double entropy = 0.0;
    std::size_t excluded = 0;  // lenient mode only
};

// Entropy of sample counts over groups. With a continent map the group is
// re-derived by point containment; otherwise the manifest's group_label
// counts are trusted.
inline ContinentDiversityResult continent_diversity(
    const DatasetManifest& manifest, const RegionMap* continents = nullptr,
    bool strict = true, LogBase base = LogBase::natural) {
    if (manifest.samples.empty()) {
        throw degenerate_input_error("manifest has no samples");
    }
    std::map<std::string, std::uint64_t> counts;
    std::size_t excluded = 0;
    for (const auto& s : manifest.samples) {
        if (continents == nullptr) {
            ++counts[s.group_label];
            continue;
        }
        try {
            ++counts[point_group(s.lat, s.lon, *continents)];
        } catch (const no_overlap_error&) {
            if (strict) {
                throw no_overlap_error("sample '" + s.id +
                                       "' is outside every continent");
            }
            ++excluded;
        }
    }
    std::vector<std::uint64_t> values;
    for (const auto& [_, c] : counts) values.push_back(c);
    if (values.empty()) {
        throw degenerate_input_error("no resolvable samples");
    }
    return {entropy_of_counts(values, base), excluded};
}

// --- area-based diversity --------------------------------------------------

// Dataset-level: pool areas across tiles, then one entropy of the pooled
// class distribution. Serves biomes and landcover alike.
inline double class_area_diversity(const std::vector<AreaVector>& tiles,
                                   LogBase base = LogBase::natural) {
    if (tiles.empty()) throw degenerate_input_error("no area vectors");
    std::map<std::string, KahanSum> per_class;
    for (const AreaVector& av : tiles) {
        for (const auto& [cls, area] : av.area_m2) per_class[cls].add(area);
    }
    KahanSum total;
    for (const auto& [_, sum] : per_class) total.add(sum.value());
    if (total.value() <= 0.0) {
        throw degenerate_input_error("total area is zero");
    }
    KahanSum acc;
    for (const auto& [_, sum] : per_class) {
        const double p = sum.value() / total.value();
        if (p > 0.0) acc.add(-p * std::log(p));
    }
    return std::max(acc.value(), 0.0) / log_divisor(base);
}

struct SampleClassDiversityResult {
    double mean_entropy = 0.0;
    std::size_t excluded = 0;  // zero-area tiles
};

// Sample-level variant: entropy of each tile's own area distribution,
// averaged over tiles.
inline SampleClassDiversityResult sample_class_diversity(
    const std::vector<AreaVector>& tiles, LogBase base = LogBase::natural) {
    if (tiles.empty()) throw degenerate_input_error("no area vectors");
    KahanSum acc;
    std::size_t used = 0, excluded = 0;
    for (const AreaVector& av : tiles) {
        if (av.total_m2 <= 0.0) {
            ++excluded;
            continue;
        }
        KahanSum h;
        for (const auto& [_, area] : av.area_m2) {
            const double p = area / av.total_m2;
            if (p > 0.0) h.add(-p * std::log(p));
        }
        acc.add(std::max(h.value(), 0.0));
        ++used;
    }
    if (used == 0) throw degenerate_input_error("every tile had zero area");
    return {acc.value() / static_cast<double>(used) / log_divisor(base),
            excluded};
}

// --- spectral entropy ------------------------------------------------------

struct SampleSpectralResult {
    std::map<std::string, double> per_band;  // H_{i,b}
    double mean = 0.0;                       // H_i
};

namespace detail {

inline bool pixel_valid(float v, const std::optional<double>& nodata) {
    if (std::isnan(v)) return false;
    return !(nodata && static_cast<double>(v) == *nodata);
}

// Histogram over K equal-width bins; the max value lands in the last bin.
inline std::vector<std::uint64_t> band_histogram(
    const RasterTile& tile, std::size_t band, const HistogramSpec& spec,
    std::size_t* valid_out) {
    const std::size_t n = tile.pixels_per_band();
    const float* data = tile.pixels.data() + band * n;

    double lo, hi;
    const auto fixed = spec.fixed_range.find(tile.bands[band]);
    if (fixed != spec.fixed_range.end()) {
        lo = fixed->second.first;
        hi = fixed->second.second;
    } else {
        lo = std::numeric_limits<double>::infinity();
        hi = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (!pixel_valid(data[i], tile.nodata)) continue;
            lo = std::min(lo, static_cast<double>(data[i]));
            hi = std::max(hi, static_cast<double>(data[i]));
        }
    }

    std::vector<std::uint64_t> bins(spec.bin_count, 0);
    std::size_t valid = 0;
    const double width = hi - lo;
    for (std::size_t i = 0; i < n; ++i) {
        if (!pixel_valid(data[i], tile.nodata)) continue;
        ++valid;
        std::size_t k = 0;
        if (width > 0.0) {
            const double t = (static_cast<double>(data[i]) - lo) / width;
            k = static_cast<std::size_t>(t * static_cast<double>(spec.bin_count));
            k = std::min(std::max<std::ptrdiff_t>(
                             0, static_cast<std::ptrdiff_t>(k)),
                         static_cast<std::ptrdiff_t>(spec.bin_count - 1));
        }
        ++bins[k];
    }
    *valid_out = valid;
    return bins;
}

}  // namespace detail

// Per-band histogram entropies and their mean for one tile. A constant
// band occupies a single bin and scores 0.
inline SampleSpectralResult spectral_entropy_sample(
    const RasterTile& tile, const HistogramSpec& spec,
    LogBase base = LogBase::natural) {
    tile.validate();
    spec.validate();
    SampleSpectralResult out;
    KahanSum mean;
    for (std::size_t b = 0; b < tile.band_count(); ++b) {
        std::size_t valid = 0;
        const auto bins = detail::band_histogram(tile, b, spec, &valid);
        if (valid == 0) {
            throw validation_error("band '" + tile.bands[b] +
                                   "' has no valid pixels");
        }
        const double h = entropy_of_counts(bins, base);
        out.per_band[tile.bands[b]] = h;
        mean.add(h);
    }
    out.mean = mean.value() / static_cast<double>(tile.band_count());
    return out;
}

struct DatasetSpectralResult {
    double mean = 0.0;                            // H_spectral
    std::map<std::string, double> per_band_mean;  // band -> mean H_{i,b}
    std::size_t sample_count = 0;
    std::size_t excluded = 0;        // tiles with an all-invalid band
    std::size_t extra_band_tiles = 0;  // tiles carrying non-shared bands
};

// Dataset mean of per-sample spectral entropy, plus per-band means over
// the band set shared by all tiles. Reduction is index-ordered, so the
// result is bitwise deterministic.
template <typename TileRange>
DatasetSpectralResult spectral_entropy_dataset(
    const TileRange& tiles, const HistogramSpec& spec,
    LogBase base = LogBase::natural) {
    std::set<std::string> shared;
    bool first = true;
    std::size_t total = 0;
    for (const RasterTile& tile : tiles) {
        ++total;
        std::set<std::string> bands(tile.bands.begin(), tile.bands.end());
        if (first) {
            shared = std::move(bands);
            first = false;
        } else {
            std::set<std::string> kept;
            std::set_intersection(shared.begin(), shared.end(), bands.begin(),
                                  bands.end(),
                                  std::inserter(kept, kept.begin()));
            shared = std::move(kept);
        }
    }
    if (total == 0) throw degenerate_input_error("no tiles given");
    if (shared.empty()) {
        throw degenerate_input_error("tiles share no spectral bands");
    }

    DatasetSpectralResult out;
    KahanSum mean_acc;
    std::map<std::string, KahanSum> band_acc;
    for (const RasterTile& tile : tiles) {
        if (tile.bands.size() != shared.size()) ++out.extra_band_tiles;
        RasterTile restricted;
        const RasterTile* use = &tile;
        if (tile.bands.size() != shared.size()) {
            restricted = tile;
            restricted.bands.clear();
            restricted.pixels.clear();
            const std::size_t n = tile.pixels_per_band();
            for (std::size_t b = 0; b < tile.bands.size(); ++b) {
                if (!shared.contains(tile.bands[b])) continue;
                restricted.bands.push_back(tile.bands[b]);
                restricted.pixels.insert(
                    restricted.pixels.end(), tile.pixels.begin() + b * n,
                    tile.pixels.begin() + (b + 1) * n);
            }
            use = &restricted;
        }
        try {
            const auto sample = spectral_entropy_sample(*use, spec, base);
            mean_acc.add(sample.mean);
            for (const auto& [band, h] : sample.per_band) {
                band_acc[band].add(h);
            }
            ++out.sample_count;
        } catch (const validation_error&) {
            ++out.excluded;  // all-invalid band
        }
    }
    if (out.sample_count == 0) {
        throw degenerate_input_error("every tile was excluded");
    }
    out.mean = mean_acc.value() / static_cast<double>(out.sample_count);
    for (const auto& [band, acc] : band_acc) {
        out.per_band_mean[band] =
            acc.value() / static_cast<double>(out.sample_count);
    }
    return out;
}

// --- report ----------------------------------------------------------------

struct DiversityReport {
    std::string dataset;
    std::optional<double> h_continent;
    std::optional<double> h_biome;
    std::optional<double> h_landcover;
    std::optional<double> h_spectral;
    std::map<std::string, double> per_band_entropy;
    std::optional<double> sample_biome_entropy;
    std::optional<double> sample_landcover_entropy;
    std::size_t sample_count = 0;
    std::size_t bin_count = 100;
    LogBase log_base = LogBase::natural;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["dataset"] = dataset;
        auto put = [&](const char* key, const std::optional<double>& v) {
            if (v) {
                j[key] = *v;
            } else {
                j[key] = nullptr;
            }
        };
        put("h_continent", h_continent);
        put("h_biome", h_biome);
        put("h_landcover", h_landcover);
        put("h_spectral", h_spectral);
        j["per_band_entropy"] = per_band_entropy;
        put("sample_biome_entropy", sample_biome_entropy);
        put("sample_landcover_entropy", sample_landcover_entropy);
        j["sample_count"] = sample_count;
        j["config"] = {{"bin_count", bin_count},
                       {"log_base", log_base_name(log_base)}};
        return j;
    }

    static DiversityReport from_json(const nlohmann::json& j) {
        DiversityReport r;
        r.dataset = j.at("dataset").get<std::string>();
        auto get = [&](const char* key) -> std::optional<double> {
            if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
            return j.at(key).get<double>();
        };
        r.h_continent = get("h_continent");
        r.h_biome = get("h_biome");
        r.h_landcover = get("h_landcover");
        r.h_spectral = get("h_spectral");
        if (j.contains("per_band_entropy")) {
            r.per_band_entropy =
                j.at("per_band_entropy")
                    .get<std::map<std::string, double>>();
        }
        r.sample_biome_entropy = get("sample_biome_entropy");
        r.sample_landcover_entropy = get("sample_landcover_entropy");
        r.sample_count = j.value("sample_count", std::size_t{0});
        if (j.contains("config")) {
            r.bin_count = j.at("config").value("bin_count", std::size_t{100});
            const std::string b = j.at("config").value("log_base", "e");
            r.log_base = b == "2" ? LogBase::two
                                  : (b == "10" ? LogBase::ten
                                               : LogBase::natural);
        }
        return r;
    }

    // Flat row for spreadsheets; column order matches csv_header().
    static std::string csv_header() {
        return "dataset,h_continent,h_biome,h_landcover,h_spectral,"
               "sample_biome_entropy,sample_landcover_entropy,sample_count,"
               "bin_count,log_base";
    }
    std::string csv_row() const {
        auto cell = [](const std::optional<double>& v) {
            if (!v) return std::string();
            std::ostringstream os;
            os.precision(12);
            os << *v;
            return os.str();
        };
        std::ostringstream os;
        os << dataset << ',' << cell(h_continent) << ',' << cell(h_biome)
           << ',' << cell(h_landcover) << ',' << cell(h_spectral) << ','
           << cell(sample_biome_entropy) << ','
           << cell(sample_landcover_entropy) << ',' << sample_count << ','
           << bin_count << ',' << log_base_name(log_base);
        return os.str();
    }
};

}  // namespace geodiverse
