#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mhri/data.hpp"
#include "mhri/metrics.hpp"
#include "mhri/model.hpp"
#include "mhri/response_model.hpp"
#include "mhri/scene_model.hpp"

namespace mhri {

/// Which parts of the unified objective are active.
struct AblationFlags {
    bool multitask = true;
    bool kl_s = true;
    bool kl_r = true;
};

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 8;  // episodes per batch
    int epochs = 30;
    double dropout = 0.1;
    double lambda_s = 0.01;
    double lambda_r = 0.01;
    int k_folds = 6;
    uint64_t seed = 0;
    AblationFlags flags;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    bool grad_clip = false;  // off by default; rescue hatch for divergence
    double clip_norm = 1.0;
    ScenePriorParams scene_prior_params;
    ResponsePriorParams response_prior_params;

    void validate() const;
};

/// Unified objective: scene plus response when multi-task, response alone
/// otherwise. The KL flags act inside the component losses.
Tensor joint_loss(const Tensor& scene_total, const Tensor& response_total,
                  const AblationFlags& flags);

/// One epoch's mean loss components for one fold.
struct EpochLog {
    int fold = 0;
    int epoch = 0;
    double l_ce_s = 0.0;
    double l_kl_s = 0.0;
    double l_ce_r = 0.0;
    double l_kl_r = 0.0;
    double total = 0.0;
};

std::string epoch_log_to_json(const EpochLog& log);

struct FoldResult {
    int fold_index = 0;
    std::vector<EpochLog> epoch_logs;
    MetricsReport metrics;
    std::string checkpoint_path;
    std::vector<std::string> train_ids;  // episodes that contributed gradients
    std::vector<std::string> test_ids;
};

struct TrainedFold {
    MhriModel model;
    FoldResult result;
};

/**
 * Trains one model on the given episodes: seeded episode shuffling, batches
 * of batch_size episodes padded to the batch maximum, forward -> joint loss
 * -> backward -> AdamW. Fully deterministic under (config, fold_index);
 * raises DivergenceError naming the epoch and batch on a non-finite loss.
 */
TrainedFold train_fold(const std::vector<Episode>& train_episodes, ModelConfig model_config,
                       const TrainConfig& config, int fold_index);

struct CrossValResult {
    std::vector<FoldResult> folds;
    MetricsReport aggregate;
};

/**
 * k-fold cross-validation: fresh parameters per fold (fold-derived seeds),
 * train on k-1 folds, evaluate on the held-out fold. When `out_dir` is
 * given, writes fold checkpoints, a JSONL training log, and metric reports
 * there. `progress` (optional) receives one line per completed fold.
 */
CrossValResult cross_validate(const std::vector<Episode>& episodes, ModelConfig model_config,
                              const TrainConfig& config,
                              const std::optional<std::string>& out_dir = std::nullopt,
                              const std::function<void(const std::string&)>& progress = nullptr);

}  // namespace mhri
