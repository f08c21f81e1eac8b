#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "geodiverse/analysis.hpp"
#include "test_support.hpp"

using namespace geodiverse;
using Catch::Matchers::WithinAbs;

#ifndef GEODIVERSE_DATA_DIR
#define GEODIVERSE_DATA_DIR "data"
#endif

namespace {

DiversityReport report_for(const std::string& dataset, double continent,
                           std::optional<double> spectral = std::nullopt) {
    DiversityReport r;
    r.dataset = dataset;
    r.h_continent = continent;
    r.h_spectral = spectral;
    return r;
}

}  // namespace

TEST_CASE("midranks") {
    SECTION("distinct scores rank 0..n-1, best first") {
        const auto ranks = midranks(
            {{"a", 0.9}, {"b", 0.5}, {"c", 0.7}}, true);
        CHECK(ranks.at("a") == 0.0);
        CHECK(ranks.at("c") == 1.0);
        CHECK(ranks.at("b") == 2.0);
    }

    SECTION("a two-way tie shares the half rank") {
        const auto ranks = midranks(
            {{"a", 0.9}, {"b", 0.7}, {"c", 0.7}}, true);
        CHECK(ranks.at("a") == 0.0);
        CHECK(ranks.at("b") == 1.5);
        CHECK(ranks.at("c") == 1.5);
    }

    SECTION("lower-is-better flips the ordering") {
        const auto ranks = midranks({{"a", 3.0}, {"b", 1.0}}, false);
        CHECK(ranks.at("b") == 0.0);
        CHECK(ranks.at("a") == 1.0);
    }

    SECTION("midranks conserve the mean (n-1)/2") {
        const auto ranks = midranks(
            {{"a", 1.0}, {"b", 1.0}, {"c", 1.0}, {"d", 2.0}, {"e", 0.0}},
            true);
        double sum = 0.0;
        for (const auto& [_, r] : ranks) sum += r;
        CHECK_THAT(sum / 5.0, WithinAbs(2.0, 1e-12));
    }
}

TEST_CASE("rank_datasets on the benchmark fixture") {
    const auto table = ScoreTable::from_csv(
        std::string(GEODIVERSE_DATA_DIR) + "/table2.csv");
    const auto result = rank_datasets(table);

    SECTION("the published ordering is reproduced") {
        const std::vector<std::string> expected = {
            "One-hot-Europe",        "One-hot-North-America",
            "One-hot-South-America", "One-hot-Asia",
            "Global",                "One-hot-Oceania",
            "One-hot-Africa",        "Zero-pretraining"};
        CHECK(result.datasets == expected);
    }

    SECTION("average ranks are the hand-computed midrank means") {
        const std::vector<double> expected = {0.0,   1.25,  2.0,   2.875,
                                              4.125, 5.125, 6.25,  6.375};
        REQUIRE(result.average_rank.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK_THAT(result.average_rank[i],
                       WithinAbs(expected[i], 1e-12));
        }
    }

    SECTION("ties are recorded") {
        CHECK_FALSE(result.tie_notes.empty());
    }
}

TEST_CASE("rank_datasets edge cases") {
    SECTION("a dataset absent from a task drops out of that task only") {
        ScoreTable table;
        table.datasets = {"a", "b", "c"};
        table.tasks = {"t1", "t2"};
        table.mean_score = {{"a", {{"t1", 0.9}, {"t2", 0.9}}},
                            {"b", {{"t1", 0.5}, {"t2", 0.5}}},
                            {"c", {{"t1", 0.7}}}};
        table.higher_is_better = {{"t1", true}, {"t2", true}};
        const auto result = rank_datasets(table);
        CHECK(result.per_task.at("t1").size() == 3);
        CHECK(result.per_task.at("t2").size() == 2);
        CHECK(result.datasets.front() == "a");
    }

    SECTION("non-finite scores name the offending cell") {
        ScoreTable table;
        table.datasets = {"a", "b"};
        table.tasks = {"t"};
        table.mean_score = {{"a", {{"t", 0.5}}},
                            {"b", {{"t", std::nan("")}}}};
        table.higher_is_better = {{"t", true}};
        CHECK_THROWS_WITH(rank_datasets(table),
                          Catch::Matchers::ContainsSubstring("(b, t)"));
    }

    SECTION("fewer than 2 datasets rejected") {
        ScoreTable table;
        table.datasets = {"a"};
        table.tasks = {"t"};
        table.mean_score = {{"a", {{"t", 0.5}}}};
        table.higher_is_better = {{"t", true}};
        CHECK_THROWS_AS(rank_datasets(table), degenerate_input_error);
    }
}

TEST_CASE("score table CSV parsing") {
    testsupport::TempDir dir("scores");
    const auto path = (dir.path() / "t.csv").string();

    SECTION("missing mean cell means the cell is absent") {
        testsupport::spit(path,
                          "dataset,task,mean,ci,higher_is_better\n"
                          "a,t1,0.5,0.01,1\n"
                          "a,t2,,,1\n");
        const auto table = ScoreTable::from_csv(path);
        CHECK(table.has("a", "t1"));
        CHECK_FALSE(table.has("a", "t2"));
    }

    SECTION("wrong header rejected") {
        testsupport::spit(path, "name,task,mean\n");
        CHECK_THROWS_AS(ScoreTable::from_csv(path), parse_error);
    }

    SECTION("bad numeric value names the line") {
        testsupport::spit(path,
                          "dataset,task,mean,ci,higher_is_better\n"
                          "a,t1,not-a-number,0.01,1\n");
        CHECK_THROWS_WITH(ScoreTable::from_csv(path),
                          Catch::Matchers::ContainsSubstring(":2"));
    }
}

TEST_CASE("spearman") {
    SECTION("monotone data gives rho exactly 1 with p 0") {
        const auto r = spearman({1, 2, 3, 4, 5}, {10, 20, 30, 40, 50});
        CHECK(r.rho == 1.0);
        CHECK(r.p_value == 0.0);
    }

    SECTION("antitone data gives rho exactly -1") {
        const auto r = spearman({1, 2, 3, 4, 5}, {5, 4, 3, 2, 1});
        CHECK(r.rho == -1.0);
    }

    SECTION("invariant under monotone transforms of either input") {
        const std::vector<double> x = {0.3, 1.7, 0.9, 2.5, 1.1, 0.2};
        const std::vector<double> y = {5.0, 2.0, 9.0, 1.0, 7.0, 4.0};
        std::vector<double> ex, log_y_shift;
        for (double v : x) ex.push_back(std::exp(v));
        for (double v : y) log_y_shift.push_back(std::log(v) + 100.0);
        const double base = spearman(x, y).rho;
        CHECK(spearman(ex, y).rho == base);
        CHECK(spearman(x, log_y_shift).rho == base);
    }

    SECTION("t-approximation p-values land in published windows at n=10") {
        const struct {
            double rho;
            double lo, hi;
        } cases[] = {{0.84, 0.001, 0.004},
                     {0.42, 0.18, 0.27},
                     {0.43, 0.17, 0.26},
                     {0.30, 0.35, 0.45}};
        for (const auto& c : cases) {
            const double p = spearman_p_from_rho(c.rho, 10);
            CHECK(p > c.lo);
            CHECK(p < c.hi);
        }
    }

    SECTION("permutation p agrees with the t approximation to ~0.02") {
        // a mid-strength correlation at n=10
        const std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        const std::vector<double> y = {2, 1, 4, 3, 6, 5, 8, 7, 10, 9};
        const auto t_mode = spearman(x, y);
        const auto perm =
            spearman(x, y, PValueMethod::permutation, 7, 20000);
        CHECK(perm.method == "permutation");
        CHECK(std::abs(perm.p_value - t_mode.p_value) < 0.02);
    }

    SECTION("permutation mode is seed-deterministic") {
        const std::vector<double> x = {1, 2, 3, 4, 5, 6};
        const std::vector<double> y = {2, 1, 4, 3, 6, 5};
        const auto a = spearman(x, y, PValueMethod::permutation, 3, 5000);
        const auto b = spearman(x, y, PValueMethod::permutation, 3, 5000);
        CHECK(a.p_value == b.p_value);
    }

    SECTION("zero variance is an undefined correlation") {
        CHECK_THROWS_AS(spearman({1, 1, 1, 1}, {1, 2, 3, 4}),
                        undefined_correlation_error);
    }

    SECTION("input validation") {
        CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), validation_error);
        CHECK_THROWS_AS(spearman({1, 2}, {1, 2}), validation_error);
        CHECK_THROWS_AS(spearman({1, 2, std::nan("")}, {1, 2, 3}),
                        validation_error);
    }
}

TEST_CASE("mean_performance") {
    ScoreTable table;
    table.datasets = {"a", "b", "c"};
    table.tasks = {"acc", "err"};
    table.mean_score = {{"a", {{"acc", 1.0}, {"err", 0.2}}},
                        {"b", {{"acc", 0.5}, {"err", 0.5}}},
                        {"c", {{"acc", 0.0}, {"err", 0.8}}}};
    table.higher_is_better = {{"acc", true}, {"err", false}};

    SECTION("normalized tasks average their min-max scaled scores") {
        const auto perf = mean_performance(table, true);
        // a: acc 1.0, err scales to 0 and flips to -0 -> mean 0.5
        CHECK_THAT(perf.at("a"), WithinAbs(0.5, 1e-12));
        CHECK_THAT(perf.at("b"), WithinAbs(0.0, 1e-12));
        CHECK_THAT(perf.at("c"), WithinAbs(-0.5, 1e-12));
    }

    SECTION("raw mode averages as printed, sign-flipping err") {
        const auto perf = mean_performance(table, false);
        CHECK_THAT(perf.at("a"), WithinAbs((1.0 - 0.2) / 2.0, 1e-12));
    }
}

TEST_CASE("correlate_diversity") {
    ScoreTable table;
    table.datasets = {"d1", "d2", "d3", "d4", "d5"};
    table.tasks = {"t"};
    table.higher_is_better = {{"t", true}};
    table.mean_score = {{"d1", {{"t", 0.1}}},
                        {"d2", {{"t", 0.3}}},
                        {"d3", {{"t", 0.5}}},
                        {"d4", {{"t", 0.7}}},
                        {"d5", {{"t", 0.9}}}};

    SECTION("diversity tracking performance gives rho 1") {
        std::vector<DiversityReport> reports;
        for (int i = 1; i <= 5; ++i) {
            reports.push_back(report_for("d" + std::to_string(i),
                                         0.2 * i));
        }
        const auto out = correlate_diversity(
            reports, table, {DiversityMeasure::continent});
        CHECK(out.at("continent").rho == 1.0);
        CHECK(out.at("continent").n == 5);
    }

    SECTION("measures with absent values skip those datasets") {
        std::vector<DiversityReport> reports;
        for (int i = 1; i <= 5; ++i) {
            reports.push_back(report_for(
                "d" + std::to_string(i), 0.2 * i,
                i <= 3 ? std::optional<double>(0.5 * i) : std::nullopt));
        }
        const auto out = correlate_diversity(
            reports, table,
            {DiversityMeasure::continent, DiversityMeasure::spectral});
        CHECK(out.at("continent").n == 5);
        CHECK(out.at("spectral").n == 3);
    }

    SECTION("unmatched report names raise an alignment error") {
        const std::vector<DiversityReport> reports = {
            report_for("d1", 1.0), report_for("ghost", 2.0),
            report_for("d3", 3.0)};
        CHECK_THROWS_WITH(
            correlate_diversity(reports, table,
                                {DiversityMeasure::continent}),
            Catch::Matchers::ContainsSubstring("ghost"));
    }

    SECTION("fewer than 3 usable pairs rejected") {
        const std::vector<DiversityReport> reports = {
            report_for("d1", 1.0), report_for("d2", 2.0)};
        CHECK_THROWS_AS(
            correlate_diversity(reports, table,
                                {DiversityMeasure::continent}),
            degenerate_input_error);
    }

    SECTION("constant diversity values are an undefined correlation") {
        const std::vector<DiversityReport> reports = {
            report_for("d1", 1.0), report_for("d2", 1.0),
            report_for("d3", 1.0)};
        CHECK_THROWS_AS(
            correlate_diversity(reports, table,
                                {DiversityMeasure::continent}),
            undefined_correlation_error);
    }
}

TEST_CASE("emit_report") {
    testsupport::TempDir dir("emit");
    const auto table = ScoreTable::from_csv(
        std::string(GEODIVERSE_DATA_DIR) + "/table2.csv");
    const auto ranks = rank_datasets(table);
    std::map<std::string, CorrelationResult> correlations;
    correlations["continent"] = {0.84, 0.0024, 10, "t-approximation"};

    SECTION("artifact row counts match the inputs") {
        emit_report(ranks, correlations, dir.path());
        const auto ranks_csv = testsupport::slurp(dir.path() / "ranks.csv");
        CHECK(std::count(ranks_csv.begin(), ranks_csv.end(), '\n') ==
              1 + 8);  // header + 8 datasets
        const auto corr_csv =
            testsupport::slurp(dir.path() / "correlations.csv");
        CHECK(std::count(corr_csv.begin(), corr_csv.end(), '\n') == 2);
        CHECK(corr_csv.find("continent,0.84,") != std::string::npos);
        const auto doc = nlohmann::json::parse(
            testsupport::slurp(dir.path() / "analysis.json"));
        CHECK(doc.at("ranks").size() == 8);
        CHECK(doc.at("correlations").at("continent").at("n") == 10);
    }

    SECTION("two emissions are byte-identical") {
        emit_report(ranks, correlations, dir.path());
        const auto first = testsupport::slurp(dir.path() / "analysis.json");
        emit_report(ranks, correlations, dir.path());
        CHECK(first == testsupport::slurp(dir.path() / "analysis.json"));
    }

    SECTION("empty correlations still write a header-only CSV") {
        emit_report(ranks, {}, dir.path());
        CHECK(testsupport::slurp(dir.path() / "correlations.csv") ==
              "measure,rho,p_value,n,method\n");
        const auto doc = nlohmann::json::parse(
            testsupport::slurp(dir.path() / "analysis.json"));
        CHECK_FALSE(doc.contains("correlations"));
    }
}
