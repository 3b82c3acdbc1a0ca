#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mhri/data.hpp"

namespace mhri {

/**
 * Gaze-stratified accuracy over the scored (human-utterance) decisions.
 * The aligned subset is the Consistency category; the misaligned subset is
 * LookWithoutSpeak plus SpeakWithoutLook. The average is micro-averaged
 * over the union, never the mean of the two subset accuracies. Accuracies
 * over empty subsets are reported as absent rather than zero.
 */
struct MetricsReport {
    std::optional<double> acc_misaligned;  // G != L
    std::optional<double> acc_aligned;     // G == L
    std::optional<double> acc_average;
    int n_misaligned = 0;
    int n_aligned = 0;
    int correct_misaligned = 0;
    int correct_aligned = 0;
    std::optional<double> per_decision_seconds;
    std::optional<double> per_decision_seconds_std;
};

/// Exact-match 4-class accuracy over scored positions, stratified by gaze
/// alignment. All inputs are aligned per-utterance vectors.
MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& truth,
                              const std::vector<GazeCategory>& categories,
                              const std::vector<uint8_t>& scored);

/// Unweighted mean of fold metrics; counts are summed for reference.
MetricsReport aggregate_metrics(const std::vector<MetricsReport>& folds);

std::string metrics_to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const std::string& text);

/// Aligned human-readable table, one row per (name, metrics) pair.
std::string render_results_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace mhri
