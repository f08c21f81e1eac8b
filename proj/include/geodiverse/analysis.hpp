#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "geodiverse/diversity.hpp"
#include "geodiverse/errors.hpp"
#include "geodiverse/rng.hpp"

namespace geodiverse {

// Downstream performance fixtures: one mean score per (dataset, task).
// Cells may be explicitly absent; absent cells drop out of that task's
// ranking.
struct ScoreTable {
    std::vector<std::string> datasets;
    std::vector<std::string> tasks;
    std::map<std::string, std::map<std::string, double>> mean_score;
    std::map<std::string, std::map<std::string, double>> ci_halfwidth;
    std::map<std::string, bool> higher_is_better;

    bool has(const std::string& dataset, const std::string& task) const {
        const auto it = mean_score.find(dataset);
        return it != mean_score.end() && it->second.contains(task);
    }

    // CSV with header: dataset,task,mean,ci,higher_is_better
    static ScoreTable from_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw persistence_error("cannot open score table: " + path);
        ScoreTable table;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (line_no == 1) {
                if (cells.size() < 5 || cells[0] != "dataset") {
                    throw parse_error(path +
                                      ": expected header dataset,task,mean,"
                                      "ci,higher_is_better");
                }
                continue;
            }
            if (cells.size() < 5) {
                throw parse_error(path + ":" + std::to_string(line_no) +
                                  ": expected 5 columns");
            }
            const std::string& dataset = cells[0];
            const std::string& task = cells[1];
            if (std::find(table.datasets.begin(), table.datasets.end(),
                          dataset) == table.datasets.end()) {
                table.datasets.push_back(dataset);
            }
            if (std::find(table.tasks.begin(), table.tasks.end(), task) ==
                table.tasks.end()) {
                table.tasks.push_back(task);
            }
            if (!cells[2].empty()) {
                try {
                    table.mean_score[dataset][task] = std::stod(cells[2]);
                } catch (const std::exception&) {
                    throw parse_error(path + ":" + std::to_string(line_no) +
                                      ": bad mean value '" + cells[2] + "'");
                }
            }
            if (!cells[3].empty()) {
                table.ci_halfwidth[dataset][task] = std::stod(cells[3]);
            }
            table.higher_is_better[task] =
                cells[4] == "1" || cells[4] == "true";
        }
        if (table.datasets.empty()) {
            throw degenerate_input_error(path + ": score table is empty");
        }
        return table;
    }
};

struct RankResult {
    std::vector<std::string> datasets;  // ascending by average rank
    std::vector<double> average_rank;   // aligned with datasets
    // task -> dataset -> 0-based midrank
    std::map<std::string, std::map<std::string, double>> per_task;
    std::vector<std::string> tie_notes;
};

// Midranks, 0 = best. Within each task, datasets with equal scores share
// the mean of the positions they span.
inline std::map<std::string, double> midranks(
    const std::vector<std::pair<std::string, double>>& scored,
    bool higher_is_better) {
    std::vector<std::size_t> order(scored.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return higher_is_better
                                    ? scored[a].second > scored[b].second
                                    : scored[a].second < scored[b].second;
                     });
    std::map<std::string, double> ranks;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() &&
               scored[order[j + 1]].second == scored[order[i]].second) {
            ++j;
        }
        const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[scored[order[k]].first] = shared;
        }
        i = j + 1;
    }
    return ranks;
}

inline RankResult rank_datasets(const ScoreTable& table) {
    if (table.datasets.size() < 2) {
        throw degenerate_input_error("need at least 2 datasets to rank");
    }
    if (table.tasks.empty()) {
        throw degenerate_input_error("score table has no tasks");
    }
    RankResult result;
    std::map<std::string, double> rank_sum;
    std::map<std::string, std::size_t> rank_count;
    for (const std::string& task : table.tasks) {
        std::vector<std::pair<std::string, double>> scored;
        for (const std::string& dataset : table.datasets) {
            if (!table.has(dataset, task)) continue;
            const double score = table.mean_score.at(dataset).at(task);
            if (!std::isfinite(score)) {
                throw validation_error("non-finite score in cell (" +
                                       dataset + ", " + task + ")");
            }
            scored.emplace_back(dataset, score);
        }
        const auto ranks =
            midranks(scored, table.higher_is_better.at(task));
        for (const auto& [dataset, rank] : ranks) {
            rank_sum[dataset] += rank;
            ++rank_count[dataset];
            result.per_task[task][dataset] = rank;
            if (rank != std::floor(rank)) {
                result.tie_notes.push_back(task + ": " + dataset +
                                           " holds midrank " +
                                           std::to_string(rank));
            }
        }
    }
    std::vector<std::pair<std::string, double>> averaged;
    for (const std::string& dataset : table.datasets) {
        if (rank_count[dataset] == 0) continue;
        averaged.emplace_back(dataset,
                              rank_sum[dataset] /
                                  static_cast<double>(rank_count[dataset]));
    }
    std::stable_sort(averaged.begin(), averaged.end(),
                     [](const auto& a, const auto& b) {
                         return a.second < b.second;
                     });
    for (const auto& [dataset, avg] : averaged) {
        result.datasets.push_back(dataset);
        result.average_rank.push_back(avg);
    }
    return result;
}

// --- Spearman correlation --------------------------------------------------

enum class PValueMethod { t_approximation, permutation };

struct CorrelationResult {
    double rho = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    std::string method;
};

namespace detail {

inline std::vector<double> rank_transform(const std::vector<double>& x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size(), 0.0);
    std::size_t i = 0;
    while (i < x.size()) {
        std::size_t j = i;
        while (j + 1 < x.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& x,
                      const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw undefined_correlation_error(
            "zero rank variance; correlation undefined");
    }
    return sxy / std::sqrt(sxx * syy);
}

// Regularized incomplete beta via Lentz's continued fraction.
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 200;
    constexpr double kEps = 3e-14;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                            std::lgamma(b) + a * std::log(x) +
                            b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// Two-sided p for a Spearman rho under the t approximation
// t = rho * sqrt((n-2) / (1-rho^2)) with n-2 degrees of freedom.
inline double spearman_p_from_rho(double rho, std::size_t n) {
    if (n < 3) throw validation_error("need n >= 3 for a p-value");
    if (std::abs(rho) >= 1.0) return 0.0;
    const double df = static_cast<double>(n - 2);
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    return detail::incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

inline CorrelationResult spearman(
    const std::vector<double>& x, const std::vector<double>& y,
    PValueMethod method = PValueMethod::t_approximation,
    std::uint64_t seed = 0, std::size_t permutations = 1000000) {
    if (x.size() != y.size()) {
        throw validation_error("spearman inputs differ in length");
    }
    if (x.size() < 3) {
        throw validation_error("spearman needs n >= 3");
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw validation_error("non-finite x value");
    }
    for (double v : y) {
        if (!std::isfinite(v)) throw validation_error("non-finite y value");
    }
    const auto rx = detail::rank_transform(x);
    const auto ry = detail::rank_transform(y);
    CorrelationResult result;
    result.n = x.size();
    result.rho = detail::pearson(rx, ry);
    if (method == PValueMethod::t_approximation) {
        result.method = "t-approximation";
        result.p_value = spearman_p_from_rho(result.rho, result.n);
    } else {
        result.method = "permutation";
        Rng rng = substream(seed, "spearman-permutation");
        std::vector<double> shuffled = ry;
        std::size_t at_least_as_extreme = 0;
        const double threshold = std::abs(result.rho) - 1e-12;
        for (std::size_t p = 0; p < permutations; ++p) {
            portable_shuffle(shuffled, rng);
            if (std::abs(detail::pearson(rx, shuffled)) >= threshold) {
                ++at_least_as_extreme;
            }
        }
        result.p_value = static_cast<double>(at_least_as_extreme + 1) /
                         static_cast<double>(permutations + 1);
    }
    return result;
}

// --- diversity vs. performance ---------------------------------------------

enum class DiversityMeasure {
    continent,
    biome,
    landcover,
    spectral,
    sample_biome,
    sample_landcover
};

inline std::string measure_name(DiversityMeasure m) {
    switch (m) {
        case DiversityMeasure::continent:
            return "continent";
        case DiversityMeasure::biome:
            return "biome";
        case DiversityMeasure::landcover:
            return "landcover";
        case DiversityMeasure::spectral:
            return "spectral";
        case DiversityMeasure::sample_biome:
            return "sample_biome";
        case DiversityMeasure::sample_landcover:
            return "sample_landcover";
    }
    return "?";
}

inline std::optional<double> measure_value(const DiversityReport& report,
                                           DiversityMeasure m) {
    switch (m) {
        case DiversityMeasure::continent:
            return report.h_continent;
        case DiversityMeasure::biome:
            return report.h_biome;
        case DiversityMeasure::landcover:
            return report.h_landcover;
        case DiversityMeasure::spectral:
            return report.h_spectral;
        case DiversityMeasure::sample_biome:
            return report.sample_biome_entropy;
        case DiversityMeasure::sample_landcover:
            return report.sample_landcover_entropy;
    }
    return std::nullopt;
}

struct CorrelateOptions {
    // min-max scale each task to [0, 1] before averaging across tasks;
    // raw mode averages the metric values as printed
    bool normalize_tasks = true;
    PValueMethod method = PValueMethod::t_approximation;
    std::uint64_t seed = 0;
    std::size_t permutations = 1000000;
};

// Per-dataset mean performance over tasks, from the score table.
inline std::map<std::string, double> mean_performance(
    const ScoreTable& table, bool normalize_tasks) {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const std::string& task : table.tasks) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        if (normalize_tasks) {
            for (const std::string& dataset : table.datasets) {
                if (!table.has(dataset, task)) continue;
                const double v = table.mean_score.at(dataset).at(task);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        for (const std::string& dataset : table.datasets) {
            if (!table.has(dataset, task)) continue;
            double v = table.mean_score.at(dataset).at(task);
            if (normalize_tasks && hi > lo) v = (v - lo) / (hi - lo);
            if (!table.higher_is_better.at(task)) v = -v;
            acc[dataset].first += v;
            ++acc[dataset].second;
        }
    }
    std::map<std::string, double> out;
    for (const auto& [dataset, sum_count] : acc) {
        out[dataset] = sum_count.first /
                       static_cast<double>(sum_count.second);
    }
    return out;
}

inline std::map<std::string, CorrelationResult> correlate_diversity(
    const std::vector<DiversityReport>& reports, const ScoreTable& table,
    const std::vector<DiversityMeasure>& measures,
    const CorrelateOptions& options = {}) {
    std::vector<std::string> unmatched;
    for (const auto& report : reports) {
        if (std::find(table.datasets.begin(), table.datasets.end(),
                      report.dataset) == table.datasets.end()) {
            unmatched.push_back(report.dataset);
        }
    }
    if (!unmatched.empty()) {
        std::string names;
        for (const auto& name : unmatched) {
            if (!names.empty()) names += ", ";
            names += name;
        }
        throw alignment_error("report names missing from score table: " +
                              names);
    }
    const auto performance =
        mean_performance(table, options.normalize_tasks);
    std::map<std::string, CorrelationResult> out;
    for (DiversityMeasure m : measures) {
        std::vector<double> x, y;
        for (const auto& report : reports) {
            const auto value = measure_value(report, m);
            if (!value) continue;
            x.push_back(*value);
            y.push_back(performance.at(report.dataset));
        }
        if (x.size() < 3) {
            throw degenerate_input_error(
                "measure '" + measure_name(m) +
                "': fewer than 3 matched pairs");
        }
        out[measure_name(m)] = spearman(x, y, options.method, options.seed,
                                        options.permutations);
    }
    return out;
}

// --- artifact emission -----------------------------------------------------

// Writes analysis.json, ranks.csv, and correlations.csv into the
// destination directory with fixed column order.
inline void emit_report(
    const RankResult& ranks,
    const std::map<std::string, CorrelationResult>& correlations,
    const std::filesystem::path& destination) {
    std::error_code ec;
    std::filesystem::create_directories(destination, ec);

    nlohmann::ordered_json doc;
    doc["ranks"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < ranks.datasets.size(); ++i) {
        doc["ranks"].push_back({{"dataset", ranks.datasets[i]},
                                {"average_rank", ranks.average_rank[i]}});
    }
    doc["per_task_ranks"] = ranks.per_task;
    doc["tie_notes"] = ranks.tie_notes;
    if (!correlations.empty()) {
        doc["correlations"] = nlohmann::ordered_json::object();
        for (const auto& [measure, corr] : correlations) {
            doc["correlations"][measure] = {{"rho", corr.rho},
                                            {"p_value", corr.p_value},
                                            {"n", corr.n},
                                            {"method", corr.method}};
        }
    }
    {
        std::ofstream out(destination / "analysis.json",
                          std::ios::binary | std::ios::trunc);
        if (!out) {
            throw persistence_error("cannot write analysis.json in " +
                                    destination.string());
        }
        out << doc.dump(2) << '\n';
    }
    {
        std::ofstream out(destination / "ranks.csv",
                          std::ios::binary | std::ios::trunc);
        if (!out) {
            throw persistence_error("cannot write ranks.csv in " +
                                    destination.string());
        }
        out << "dataset,average_rank\n";
        out.precision(12);
        for (std::size_t i = 0; i < ranks.datasets.size(); ++i) {
            out << ranks.datasets[i] << ',' << ranks.average_rank[i] << '\n';
        }
    }
    {
        std::ofstream out(destination / "correlations.csv",
                          std::ios::binary | std::ios::trunc);
        if (!out) {
            throw persistence_error("cannot write correlations.csv in " +
                                    destination.string());
        }
        out << "measure,rho,p_value,n,method\n";
        out.precision(12);
        for (const auto& [measure, corr] : correlations) {
            out << measure << ',' << corr.rho << ',' << corr.p_value << ','
                << corr.n << ',' << corr.method << '\n';
        }
    }
}

}  // namespace geodiverse
