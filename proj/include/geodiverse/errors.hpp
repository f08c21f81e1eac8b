#pragma once

#include <stdexcept>
#include <string>

namespace geodiverse {

// Error taxonomy shared by all modules. Each class maps to one failure
// category surfaced by the CLI exit-code contract.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input values, broken invariants, malformed records.
struct validation_error : error {
    using error::error;
};

// Malformed file content; message carries the line number where known.
struct parse_error : error {
    using error::error;
};

// Missing or inconsistent configuration (paths, bands, region sets).
struct config_error : error {
    using error::error;
};

// Filesystem read/write failure; message carries the path.
struct persistence_error : error {
    using error::error;
};

// A geometry query found no intersecting class.
struct no_overlap_error : error {
    using error::error;
};

// Input too small or empty for the requested computation.
struct degenerate_input_error : error {
    using error::error;
};

// A (group, class) cell cannot satisfy its quota.
struct insufficiency_error : error {
    using error::error;
};

// Sampling could not place the requested number of points.
struct saturation_error : error {
    saturation_error(const std::string& msg, std::size_t achieved)
        : error(msg), achieved_count(achieved) {}
    std::size_t achieved_count;
};

// Tile source: no scene in the requested window.
struct availability_error : error {
    using error::error;
};

// Tile source: every candidate scene exceeds the cloud bound.
struct cloud_filter_error : error {
    using error::error;
};

// Tile source: network or decode failure.
struct source_error : error {
    using error::error;
};

// Report names do not line up with score-table rows.
struct alignment_error : error {
    using error::error;
};

// Zero rank variance; Spearman correlation has no value.
struct undefined_correlation_error : error {
    using error::error;
};

}  // namespace geodiverse
