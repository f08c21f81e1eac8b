#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iterator>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "geodiverse/apportion.hpp"
#include "geodiverse/errors.hpp"
#include "geodiverse/rng.hpp"

namespace geodiverse {

inline constexpr int kManifestSchemaVersion = 1;

// Target proportions over mutually exclusive groups; lives on the simplex.
struct AllocationVector {
    std::vector<std::string> groups;
    std::vector<double> weights;

    friend bool operator==(const AllocationVector&,
                           const AllocationVector&) = default;

    void validate() const {
        if (groups.size() != weights.size()) {
            throw validation_error("allocation groups/weights length mismatch");
        }
        std::set<std::string> seen(groups.begin(), groups.end());
        if (seen.size() != groups.size()) {
            throw validation_error("allocation group names not unique");
        }
        double sum = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw validation_error("allocation weight < 0");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw validation_error("allocation weights sum to " +
                                   std::to_string(sum) + ", expected 1");
        }
    }

    static AllocationVector one_hot(const std::vector<std::string>& groups,
                                    const std::string& hot) {
        AllocationVector a{groups, std::vector<double>(groups.size(), 0.0)};
        const auto it = std::find(groups.begin(), groups.end(), hot);
        if (it == groups.end()) {
            throw validation_error("one-hot group not in group list: " + hot);
        }
        a.weights[static_cast<std::size_t>(it - groups.begin())] = 1.0;
        return a;
    }

    static AllocationVector uniform(const std::vector<std::string>& groups) {
        if (groups.empty()) throw validation_error("empty group list");
        return {groups, std::vector<double>(groups.size(),
                                            1.0 / static_cast<double>(
                                                      groups.size()))};
    }
};

// One georeferenced tile record.
struct GeoSample {
    std::string id;
    double lat = 0.0;
    double lon = 0.0;
    std::string group_label;
    std::string acquisition_date;  // ISO-8601, may be empty before ingest
    double cloud_cover_pct = 0.0;
    std::string tile_uri;             // empty before ingestion
    std::string class_label;          // empty for unlabeled samples

    friend bool operator==(const GeoSample&, const GeoSample&) = default;
};

struct DatasetManifest {
    std::string name;
    std::vector<std::string> groups;
    AllocationVector allocation;
    std::uint64_t seed = 0;
    int schema_version = kManifestSchemaVersion;
    std::vector<GeoSample> samples;

    friend bool operator==(const DatasetManifest&,
                           const DatasetManifest&) = default;

    // Eq.-style realized allocation: per-group counts over total, computed
    // by counting. Zero-sample manifests return all-zero weights.
    AllocationVector realized_allocation() const {
        AllocationVector a{groups, std::vector<double>(groups.size(), 0.0)};
        if (samples.empty()) return a;
        std::map<std::string, std::size_t> counts;
        for (const auto& s : samples) ++counts[s.group_label];
        for (std::size_t g = 0; g < groups.size(); ++g) {
            a.weights[g] = static_cast<double>(counts[groups[g]]) /
                           static_cast<double>(samples.size());
        }
        return a;
    }

    void validate() const {
        allocation.validate();
        if (allocation.groups != groups) {
            throw validation_error("allocation group order differs from "
                                   "manifest groups");
        }
        std::set<std::string> group_set(groups.begin(), groups.end());
        std::set<std::string> ids;
        for (const auto& s : samples) {
            if (s.lat < -90.0 || s.lat > 90.0) {
                throw validation_error("sample '" + s.id +
                                       "': lat out of [-90, 90]");
            }
            if (s.lon < -180.0 || s.lon > 180.0) {
                throw validation_error("sample '" + s.id +
                                       "': lon out of [-180, 180]");
            }
            if (s.cloud_cover_pct < 0.0 || s.cloud_cover_pct > 100.0) {
                throw validation_error("sample '" + s.id +
                                       "': cloud_cover_pct out of [0, 100]");
            }
            if (!group_set.contains(s.group_label)) {
                throw validation_error("sample '" + s.id +
                                       "': group '" + s.group_label +
                                       "' not in declared group set");
            }
            if (!ids.insert(s.id).second) {
                throw validation_error("duplicate sample id '" + s.id + "'");
            }
        }
    }
};

// Split construction parameters (train/val/test ratios and caps).
struct SplitSpec {
    std::array<double, 3> ratios{0.70, 0.15, 0.15};
    std::size_t top_k_classes = 20;
    std::size_t per_class_cap = 251;
    std::size_t total_cap = 5020;

    void validate() const {
        double sum = 0.0;
        for (double r : ratios) {
            if (r <= 0.0) throw validation_error("split ratio must be > 0");
            sum += r;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw validation_error("split ratios must sum to 1");
        }
        if (top_k_classes == 0) throw validation_error("top_k_classes == 0");
        if (per_class_cap == 0) throw validation_error("per_class_cap == 0");
        if (total_cap == 0) throw validation_error("total_cap == 0");
    }
};

// --- JSONL persistence -----------------------------------------------------

namespace detail {

inline nlohmann::ordered_json sample_to_json(const GeoSample& s) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["lat"] = s.lat;
    j["lon"] = s.lon;
    j["group_label"] = s.group_label;
    j["acquisition_date"] = s.acquisition_date;
    j["cloud_cover_pct"] = s.cloud_cover_pct;
    if (!s.tile_uri.empty()) j["tile_uri"] = s.tile_uri;
    if (!s.class_label.empty()) j["class_label"] = s.class_label;
    return j;
}

inline GeoSample sample_from_json(const nlohmann::json& j) {
    GeoSample s;
    s.id = j.at("id").get<std::string>();
    s.lat = j.at("lat").get<double>();
    s.lon = j.at("lon").get<double>();
    s.group_label = j.at("group_label").get<std::string>();
    s.acquisition_date = j.at("acquisition_date").get<std::string>();
    s.cloud_cover_pct = j.at("cloud_cover_pct").get<double>();
    s.tile_uri = j.value("tile_uri", "");
    s.class_label = j.value("class_label", "");
    return s;
}

}  // namespace detail

// One JSON header line, then one JSON line per sample, fixed field order.
// Written via a .partial file and an atomic rename.
inline void write_manifest(const DatasetManifest& manifest,
                           const std::filesystem::path& destination) {
    manifest.validate();
    const std::filesystem::path partial =
        destination.string() + ".partial";
    {
        std::ofstream out(partial, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw persistence_error("cannot open for writing: " +
                                    destination.string());
        }
        nlohmann::ordered_json header;
        header["schema_version"] = manifest.schema_version;
        header["name"] = manifest.name;
        header["groups"] = manifest.groups;
        header["allocation"] = manifest.allocation.weights;
        header["seed"] = manifest.seed;
        out << header.dump() << '\n';
        for (const auto& s : manifest.samples) {
            out << detail::sample_to_json(s).dump() << '\n';
        }
        if (!out) {
            throw persistence_error("write failed: " + destination.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(partial, destination, ec);
    if (ec) {
        throw persistence_error("rename to " + destination.string() +
                                " failed: " + ec.message());
    }
}

inline DatasetManifest read_manifest(const std::filesystem::path& source) {
    std::ifstream in(source, std::ios::binary);
    if (!in) throw persistence_error("cannot open: " + source.string());
    std::string line;
    std::size_t line_no = 0;
    DatasetManifest m;
    auto parse_line = [&](const std::string& text) {
        try {
            return nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(source.string() + ":" +
                              std::to_string(line_no) + ": " + e.what());
        }
    };
    if (!std::getline(in, line)) {
        throw parse_error(source.string() + ": missing manifest header line");
    }
    ++line_no;
    {
        const nlohmann::json header = parse_line(line);
        m.schema_version = header.at("schema_version").get<int>();
        if (m.schema_version != kManifestSchemaVersion) {
            throw validation_error(source.string() +
                                   ": unknown schema_version " +
                                   std::to_string(m.schema_version));
        }
        m.name = header.at("name").get<std::string>();
        m.groups = header.at("groups").get<std::vector<std::string>>();
        m.allocation.groups = m.groups;
        m.allocation.weights =
            header.at("allocation").get<std::vector<double>>();
        m.seed = header.at("seed").get<std::uint64_t>();
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        m.samples.push_back(detail::sample_from_json(parse_line(line)));
    }
    m.validate();
    return m;
}

// --- downstream subset construction ----------------------------------------

namespace detail {

// Split ratios applied per class with largest-remainder rounding; tie
// priority is train, then val, then test (input order of the weights).
inline std::array<std::size_t, 3> split_counts(const SplitSpec& spec,
                                               std::size_t n) {
    const auto counts = largest_remainder(
        {spec.ratios[0], spec.ratios[1], spec.ratios[2]}, n);
    return {counts[0], counts[1], counts[2]};
}

inline DatasetManifest subset_like(const DatasetManifest& base,
                                   const std::string& suffix,
                                   std::uint64_t seed) {
    DatasetManifest out;
    out.name = base.name + suffix;
    out.groups = base.groups;
    out.seed = seed;
    out.allocation = AllocationVector{
        base.groups, std::vector<double>(base.groups.size(), 0.0)};
    return out;
}

// Rewrites allocation as the realized per-group fraction so the stored
// vector satisfies the counting definition. An empty manifest keeps the
// parent's declared allocation to stay on the simplex.
inline void finalize_allocation(DatasetManifest& m,
                                const AllocationVector& fallback) {
    m.allocation = m.samples.empty() ? fallback : m.realized_allocation();
}

}  // namespace detail

// Top-k class filter, per-class cap, and per-class ratio split, per group
// (or over all groups when group_filter is empty).
inline std::tuple<DatasetManifest, DatasetManifest, DatasetManifest>
build_downstream_subsets(const DatasetManifest& labeled,
                         const std::optional<std::string>& group_filter,
                         const SplitSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (group_filter &&
        std::find(labeled.groups.begin(), labeled.groups.end(),
                  *group_filter) == labeled.groups.end()) {
        throw validation_error("group_filter '" + *group_filter +
                               "' is not a declared group");
    }

    std::vector<const GeoSample*> pool;
    for (const auto& s : labeled.samples) {
        if (s.class_label.empty()) {
            throw validation_error("sample '" + s.id +
                                   "' lacks a class_label");
        }
        if (!group_filter || s.group_label == *group_filter) {
            pool.push_back(&s);
        }
    }
    if (pool.empty()) {
        throw degenerate_input_error(
            "no samples in group '" +
            (group_filter ? *group_filter : std::string("<all>")) + "'");
    }

    std::map<std::string, std::vector<const GeoSample*>> by_class;
    for (const GeoSample* s : pool) by_class[s->class_label].push_back(s);
    if (by_class.size() < spec.top_k_classes) {
        std::string available;
        for (const auto& [cls, _] : by_class) {
            if (!available.empty()) available += ", ";
            available += cls;
        }
        throw degenerate_input_error(
            "only " + std::to_string(by_class.size()) +
            " distinct classes, need " + std::to_string(spec.top_k_classes) +
            " (available: " + available + ")");
    }

    // most frequent first; frequency ties break lexicographically
    std::vector<std::string> classes;
    for (const auto& [cls, _] : by_class) classes.push_back(cls);
    std::stable_sort(classes.begin(), classes.end(),
                     [&](const std::string& a, const std::string& b) {
                         const auto na = by_class[a].size();
                         const auto nb = by_class[b].size();
                         return na != nb ? na > nb : a < b;
                     });
    classes.resize(spec.top_k_classes);
    std::sort(classes.begin(), classes.end());

    // total_cap is enforced by shrinking the effective per-class cap
    const std::size_t effective_cap =
        std::min(spec.per_class_cap, spec.total_cap / spec.top_k_classes);
    if (effective_cap == 0) {
        throw validation_error("total_cap too small for top_k_classes");
    }

    const std::string tag =
        group_filter ? ("-" + *group_filter) : std::string("");
    auto train = detail::subset_like(labeled, tag + "-train", seed);
    auto val = detail::subset_like(labeled, tag + "-val", seed);
    auto test = detail::subset_like(labeled, tag + "-test", seed);

    for (const std::string& cls : classes) {
        auto members = by_class[cls];
        Rng rng = substream(seed, "class:" + cls);
        portable_shuffle(members, rng);
        const std::size_t take = std::min(effective_cap, members.size());
        const auto [n_train, n_val, n_test] =
            detail::split_counts(spec, take);
        for (std::size_t i = 0; i < take; ++i) {
            if (i < n_train) {
                train.samples.push_back(*members[i]);
            } else if (i < n_train + n_val) {
                val.samples.push_back(*members[i]);
            } else {
                test.samples.push_back(*members[i]);
            }
        }
    }
    for (auto* m : {&train, &val, &test}) {
        std::sort(m->samples.begin(), m->samples.end(),
                  [](const GeoSample& a, const GeoSample& b) {
                      return a.id < b.id;
                  });
        detail::finalize_allocation(*m, labeled.allocation);
    }
    return {train, val, test};
}

// Balanced global subset: an exact per-class quota from every group for
// each of the three splits.
inline std::tuple<DatasetManifest, DatasetManifest, DatasetManifest>
build_global_subset(const std::vector<DatasetManifest>& per_group_subsets,
                    const std::array<std::size_t, 3>& per_class_quota,
                    std::uint64_t seed) {
    if (per_group_subsets.empty()) {
        throw degenerate_input_error("no per-group subsets given");
    }

    // shared class vocabulary = intersection across groups
    std::set<std::string> shared;
    for (std::size_t g = 0; g < per_group_subsets.size(); ++g) {
        std::set<std::string> classes;
        for (const auto& s : per_group_subsets[g].samples) {
            if (!s.class_label.empty()) classes.insert(s.class_label);
        }
        if (g == 0) {
            shared = std::move(classes);
        } else {
            std::set<std::string> kept;
            std::set_intersection(shared.begin(), shared.end(),
                                  classes.begin(), classes.end(),
                                  std::inserter(kept, kept.begin()));
            shared = std::move(kept);
        }
    }
    if (shared.empty()) {
        throw degenerate_input_error(
            "group subsets share no class vocabulary");
    }

    std::vector<std::string> all_groups;
    for (const auto& m : per_group_subsets) {
        for (const auto& g : m.groups) {
            if (std::find(all_groups.begin(), all_groups.end(), g) ==
                all_groups.end()) {
                all_groups.push_back(g);
            }
        }
    }
    DatasetManifest train, val, test;
    for (auto* m : {&train, &val, &test}) {
        m->groups = all_groups;
        m->seed = seed;
        m->allocation = AllocationVector{
            all_groups, std::vector<double>(all_groups.size(), 0.0)};
    }
    train.name = "global-train";
    val.name = "global-val";
    test.name = "global-test";

    const std::size_t need =
        per_class_quota[0] + per_class_quota[1] + per_class_quota[2];
    for (const auto& group_manifest : per_group_subsets) {
        std::map<std::string, std::vector<const GeoSample*>> by_class;
        for (const auto& s : group_manifest.samples) {
            if (shared.contains(s.class_label)) {
                by_class[s.class_label].push_back(&s);
            }
        }
        for (const std::string& cls : shared) {
            auto& members = by_class[cls];
            if (members.size() < need) {
                throw insufficiency_error(
                    "group '" + group_manifest.name + "' class '" + cls +
                    "' has " + std::to_string(members.size()) +
                    " samples, quota needs " + std::to_string(need));
            }
            Rng rng = substream(
                seed, group_manifest.name + "/" + cls);
            portable_shuffle(members, rng);
            std::size_t i = 0;
            for (; i < per_class_quota[0]; ++i) {
                train.samples.push_back(*members[i]);
            }
            for (; i < per_class_quota[0] + per_class_quota[1]; ++i) {
                val.samples.push_back(*members[i]);
            }
            for (; i < need; ++i) test.samples.push_back(*members[i]);
        }
    }
    const AllocationVector fallback = AllocationVector::uniform(all_groups);
    for (auto* m : {&train, &val, &test}) {
        std::sort(m->samples.begin(), m->samples.end(),
                  [](const GeoSample& a, const GeoSample& b) {
                      return a.id < b.id;
                  });
        detail::finalize_allocation(*m, fallback);
    }
    return {train, val, test};
}

}  // namespace geodiverse
