#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mhri/data.hpp"
#include "mhri/metrics.hpp"
#include "mhri/model.hpp"
#include "mhri/trainer.hpp"

namespace mhri {

/// Flattened per-utterance decisions over a set of episodes, aligned with
/// their truth labels, gaze categories and the scoring mask.
struct PredictionSet {
    std::vector<int> predictions;
    std::vector<int> truth;
    std::vector<GazeCategory> categories;
    std::vector<uint8_t> scored;
};

/// Runs the model (eval mode, no padding) over every episode and reads out
/// argmax response decisions.
PredictionSet predict_responses(MhriModel& model, const std::vector<Episode>& episodes,
                                bool use_scene = true);

MetricsReport evaluate_model(MhriModel& model, const std::vector<Episode>& episodes,
                             bool use_scene = true);

/// If-then gaze rule: a human utterance whose gaze target is the robot gets
/// RespondSpeaker, anything else gets None. Scored through the same
/// compute_metrics path as the learned models.
PredictionSet gaze_baseline_predictions(const std::vector<Episode>& episodes);
MetricsReport run_gaze_baseline(const std::vector<Episode>& episodes);

struct LatencyReport {
    double mean_seconds = 0.0;
    double std_seconds = 0.0;
    int episodes = 0;
    int repetitions = 0;
};

/// Wall-clock of a full-episode forward divided by its utterance count,
/// averaged over episodes and repetitions (one discarded warm-up pass,
/// monotonic clock, single-threaded).
LatencyReport measure_latency(MhriModel& model, const std::vector<Episode>& episodes,
                              int repetitions, bool use_scene = true);

/// Writes one delimiter-separated row per scored utterance: ids, scene and
/// response truth, category, then the hidden vector. Deterministic and
/// byte-stable across checkpoint reloads.
void export_embeddings(MhriModel& model, const std::vector<Episode>& episodes,
                       const std::string& path, bool use_scene = true);

struct AblationRow {
    char row_id = 'a';
    AblationFlags flags;
    MetricsReport metrics;  // mean over seeds
};

struct AblationResult {
    std::vector<AblationRow> rows;
    // Cross-validation runs behind each row, indexed [row][seed]; kept for
    // log inspection.
    std::vector<std::vector<CrossValResult>> runs;
};

/// The six flag combinations of the ablation grid, in row order a..f.
const std::array<std::pair<char, AblationFlags>, 6>& ablation_grid();

/// Trains and cross-validates every ablation row for every seed.
AblationResult run_ablation(const std::vector<Episode>& episodes, ModelConfig model_config,
                            TrainConfig config, const std::vector<uint64_t>& seeds,
                            const std::function<void(const std::string&)>& progress = nullptr);

std::string render_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace mhri
