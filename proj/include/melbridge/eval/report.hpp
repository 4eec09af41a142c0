#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "melbridge/eval/metrics.hpp"

namespace melbridge::eval {

// Canonical metric keys; reports may carry additional ones.
inline constexpr const char* kFad = "fad";
inline constexpr const char* kRelevanceMean = "relevance_mean";
inline constexpr const char* kRelevanceStderr = "relevance_stderr";
inline constexpr const char* kWindowMaxMean = "window_max_mean";
inline constexpr const char* kWindowMeanMean = "window_mean_mean";
inline constexpr const char* kWindowMinMean = "window_min_mean";

/// One evaluation run: provenance strings (guidance, sample count, backbone,
/// reference split, ...), numeric metrics, and the query-cosine table.
/// Serialized as versioned sectioned text; numeric round trips are exact.
struct EvalReport {
    std::vector<std::pair<std::string, std::string>> provenance;
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<CosineRow> cosine_table;

    void set_provenance(const std::string& key, const std::string& value);
    std::optional<std::string> provenance_value(const std::string& key) const;

    void set_metric(const std::string& key, double value);
    std::optional<double> metric(const std::string& key) const;

    /// All metric values finite, keys nonempty and '='-free. Throws otherwise.
    void validate() const;

    void save(const std::string& path) const;
    static EvalReport load(const std::string& path);
};

}  // namespace melbridge::eval
