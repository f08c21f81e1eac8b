#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geodiverse/overlay.hpp"
#include "geodiverse/sampler.hpp"
#include "test_support.hpp"

using namespace geodiverse;

namespace {

// Independent largest-remainder oracle: explicit quota/remainder lists,
// remainders settled by exhaustive max scans.
std::vector<std::size_t> apportion_oracle(const std::vector<double>& w,
                                          std::size_t n) {
    std::vector<std::size_t> counts(w.size());
    std::vector<double> rem(w.size());
    std::size_t total = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double ideal = w[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(std::floor(ideal));
        rem[i] = ideal - std::floor(ideal);
        total += counts[i];
    }
    while (total < n) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < w.size(); ++i) {
            if (rem[i] > rem[best]) best = i;
        }
        ++counts[best];
        rem[best] = -1.0;
        ++total;
    }
    return counts;
}

}  // namespace

TEST_CASE("allocate_counts") {
    SECTION("one-hot sends everything to one group") {
        AllocationVector alpha{{"Asia", "Africa", "Europe", "NA", "SA", "OC"},
                               {1, 0, 0, 0, 0, 0}};
        const auto counts = allocate_counts(alpha, 700000);
        CHECK(counts.at("Asia") == 700000);
        CHECK(counts.at("Africa") == 0);
    }

    SECTION("uniform over 6 with n=6 gives one each") {
        const auto alpha = AllocationVector::uniform(
            {"Asia", "Africa", "Europe", "NA", "SA", "OC"});
        for (const auto& [group, count] : allocate_counts(alpha, 6)) {
            CHECK(count == 1);
        }
    }

    SECTION("published continent shares at n=100 match the oracle") {
        // the published two-decimal vector sums to 0.98; renormalize
        std::vector<double> w = {0.21, 0.09, 0.35, 0.23, 0.08, 0.02};
        double total = 0.0;
        for (double v : w) total += v;
        for (auto& v : w) v /= total;
        AllocationVector alpha{{"Asia", "Africa", "Europe", "NA", "SA", "OC"},
                               w};
        const auto counts = allocate_counts(alpha, 100);
        const auto expected = apportion_oracle(w, 100);
        std::size_t g = 0;
        for (const auto& group : alpha.groups) {
            CHECK(counts.at(group) == expected[g++]);
        }
    }

    SECTION("100 random (alpha, n) pairs: counts sum to n, within 1/n") {
        Rng rng(99);
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t k = 2 + rng.next_below(6);
            std::vector<double> w(k);
            double sum = 0.0;
            for (auto& v : w) {
                v = rng.next_double() + 1e-3;
                sum += v;
            }
            for (auto& v : w) v /= sum;
            std::vector<std::string> names;
            for (std::size_t i = 0; i < k; ++i) {
                names.push_back("g" + std::to_string(i));
            }
            const std::size_t n = 1 + rng.next_below(10000);
            const auto counts =
                allocate_counts(AllocationVector{names, w}, n);
            std::size_t total = 0;
            for (std::size_t i = 0; i < k; ++i) {
                const double realized =
                    static_cast<double>(counts.at(names[i])) /
                    static_cast<double>(n);
                CHECK(std::abs(realized - w[i]) <=
                      1.0 / static_cast<double>(n) + 1e-12);
                total += counts.at(names[i]);
            }
            CHECK(total == n);
        }
    }
}

TEST_CASE("sample_points basics") {
    RegionSet regions;
    regions.regions.emplace_back("box", testsupport::square_mp(10.0, 40.0, 0.1));
    AllocationVector alpha{{"box"}, {1.0}};

    SECTION("all points inside a tiny square, mean near the center") {
        const auto m = sample_points(regions, alpha, 100, 3);
        REQUIRE(m.samples.size() == 100);
        double mean_lon = 0.0, mean_lat = 0.0;
        for (const auto& s : m.samples) {
            CHECK(s.lon >= 10.0);
            CHECK(s.lon <= 10.1);
            CHECK(s.lat >= 40.0);
            CHECK(s.lat <= 40.1);
            mean_lon += s.lon;
            mean_lat += s.lat;
        }
        mean_lon /= 100.0;
        mean_lat /= 100.0;
        // uniform on [0, 0.1]: sigma of the mean = 0.1/sqrt(12)/10
        const double three_sigma = 3.0 * 0.1 / std::sqrt(12.0) / 10.0;
        CHECK(std::abs(mean_lon - 10.05) < three_sigma);
        CHECK(std::abs(mean_lat - 40.05) < three_sigma);
    }

    SECTION("same seed reproduces, different seeds differ") {
        const auto a = sample_points(regions, alpha, 120, 5);
        const auto b = sample_points(regions, alpha, 120, 5);
        const auto c = sample_points(regions, alpha, 120, 6);
        CHECK(a == b);
        CHECK(a.samples != c.samples);
    }

    SECTION("missing polygons for a live group is a config error") {
        AllocationVector two{{"box", "ghost"}, {0.5, 0.5}};
        CHECK_THROWS_AS(sample_points(regions, two, 10, 1), config_error);
    }

    SECTION("min separation on a packed polygon saturates") {
        // 0.1 deg ~ 11 km; 23 km separation fits very few points
        CHECK_THROWS_AS(
            sample_points(regions, alpha, 500, 1, 23000.0),
            saturation_error);
    }

    SECTION("min separation holds when feasible") {
        const auto m = sample_points(regions, alpha, 3, 11, 1000.0);
        for (std::size_t i = 0; i < m.samples.size(); ++i) {
            for (std::size_t j = i + 1; j < m.samples.size(); ++j) {
                CHECK(geom::great_circle_m(
                          m.samples[i].lat, m.samples[i].lon,
                          m.samples[j].lat, m.samples[j].lon) >= 1000.0);
            }
        }
    }
}

TEST_CASE("sample_points multi-group") {
    testsupport::TempDir dir("sampler");
    const auto geojson = dir.path() / "continents.geojson";
    testsupport::write_toy_continents(geojson);
    const auto regions = RegionSet::from_geojson(geojson.string());
    std::vector<std::string> groups;
    for (const auto& [name, _] : regions.regions) groups.push_back(name);

    const auto alpha = AllocationVector::uniform(groups);
    const auto m = sample_points(regions, alpha, 600, 17);

    SECTION("realized allocation equals allocate_counts exactly") {
        const auto expected = allocate_counts(alpha, 600);
        std::map<std::string, std::size_t> realized;
        for (const auto& s : m.samples) ++realized[s.group_label];
        CHECK(realized == expected);
    }

    SECTION("every point contains in its own group via the overlay path") {
        // cross-check with the overlay module's independent containment
        const auto map = RegionMap::from_geojson(geojson.string());
        for (const auto& s : m.samples) {
            CHECK(point_group(s.lat, s.lon, map) == s.group_label);
        }
    }

    SECTION("strict exclusivity accepts the disjoint toy map") {
        CHECK_NOTHROW(regions.check_exclusive());
        RegionSet overlapping = regions;
        overlapping.regions.emplace_back(
            "overlap", testsupport::square_mp(12.0, 52.0, 5.0));
        CHECK_THROWS_AS(overlapping.check_exclusive(), validation_error);
    }
}

TEST_CASE("sampler uniformity chi-square on a 4x4 grid") {
    RegionSet regions;
    regions.regions.emplace_back("r", testsupport::square_mp(0.0, 0.0, 4.0));
    AllocationVector alpha{{"r"}, {1.0}};
    const auto m = sample_points(regions, alpha, 10000, 1234);

    // cos(lat) weighting across [0, 4] degrees barely perturbs cell
    // probabilities; compute expected mass per latitude row exactly
    std::array<double, 16> observed{};
    for (const auto& s : m.samples) {
        const int col = std::min(3, static_cast<int>(s.lon));
        const int row = std::min(3, static_cast<int>(s.lat));
        ++observed[row * 4 + col];
    }
    const double total_mass =
        std::sin(4.0 * geom::kDegToRad) - std::sin(0.0);
    double chi2 = 0.0;
    for (int row = 0; row < 4; ++row) {
        const double row_mass =
            std::sin((row + 1.0) * geom::kDegToRad) -
            std::sin(row * geom::kDegToRad);
        const double expected = 10000.0 * row_mass / total_mass / 4.0;
        for (int col = 0; col < 4; ++col) {
            const double d = observed[row * 4 + col] - expected;
            chi2 += d * d / expected;
        }
    }
    // chi-square critical value, 15 dof, alpha = 0.001
    CHECK(chi2 < 37.697);
}
