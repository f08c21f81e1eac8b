#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

namespace geodiverse {

// Largest-remainder (Hamilton) apportionment of n into the given weights.
// Remainder ties are broken by position, so callers fix tie priority via
// input order (e.g. train before val before test).
inline std::vector<std::size_t> largest_remainder(
    const std::vector<double>& weights, std::size_t n) {
    const std::size_t k = weights.size();
    std::vector<std::size_t> counts(k, 0);
    std::vector<double> remainders(k, 0.0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double ideal = weights[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(ideal);
        remainders[i] = ideal - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return remainders[a] > remainders[b];
    });
    for (std::size_t i = 0; assigned < n; ++i) {
        ++counts[order[i % k]];
        ++assigned;
    }
    return counts;
}

}  // namespace geodiverse
