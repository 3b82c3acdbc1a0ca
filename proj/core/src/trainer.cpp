#include "mhri/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "mhri/checkpoint.hpp"
#include "mhri/errors.hpp"
#include "mhri/evaluator.hpp"
#include "mhri/ops.hpp"

namespace mhri {

using nlohmann::json;

void TrainConfig::validate() const {
    if (lr < 0.0) throw ConfigError("TrainConfig: lr must be >= 0");
    if (batch_size <= 0) throw ConfigError("TrainConfig: batch_size must be positive");
    if (epochs <= 0) throw ConfigError("TrainConfig: epochs must be positive");
    if (k_folds < 2) throw ConfigError("TrainConfig: k_folds must be >= 2");
    if (lambda_s < 0.0 || lambda_r < 0.0) throw ConfigError("TrainConfig: lambdas must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("TrainConfig: dropout must be in [0, 1)");
    if (clip_norm <= 0.0) throw ConfigError("TrainConfig: clip_norm must be positive");
    scene_prior_params.validate();
    response_prior_params.validate();
}

Tensor joint_loss(const Tensor& scene_total, const Tensor& response_total,
                  const AblationFlags& flags) {
    if (!flags.multitask) return response_total;
    return add(scene_total, response_total);
}

std::string epoch_log_to_json(const EpochLog& log) {
    json j;
    j["fold"] = log.fold;
    j["epoch"] = log.epoch;
    j["l_ce_s"] = log.l_ce_s;
    j["l_kl_s"] = log.l_kl_s;
    j["l_ce_r"] = log.l_ce_r;
    j["l_kl_r"] = log.l_kl_r;
    j["total"] = log.total;
    return j.dump();
}

namespace {

void clip_gradients(ParamSet& params, double max_norm) {
    double sq = 0.0;
    for (auto& [name, t] : params.params()) {
        for (double g : t.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (auto& [name, t] : params.params()) {
        for (double& g : t.grad()) g *= scale;
    }
}

}  // namespace

TrainedFold train_fold(const std::vector<Episode>& train_episodes, ModelConfig model_config,
                       const TrainConfig& config, int fold_index) {
    config.validate();
    if (train_episodes.empty()) throw ContractError("train_fold: empty training set");

    const uint64_t fold_tag = static_cast<uint64_t>(fold_index);
    model_config.dropout = config.dropout;
    model_config.seed = derive_seed(config.seed, 0x696e6974 /* "init" */, fold_tag);
    MhriModel model(model_config);

    RngStream shuffle_rng(derive_seed(config.seed, 0x73687566 /* "shuf" */, fold_tag));
    RngStream dropout_rng(derive_seed(config.seed, 0x64726f70 /* "drop" */, fold_tag));

    FoldResult result;
    result.fold_index = fold_index;
    for (const Episode& e : train_episodes) result.train_ids.push_back(e.episode_id);
    std::sort(result.train_ids.begin(), result.train_ids.end());

    std::vector<size_t> order(train_episodes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);

        EpochLog log;
        log.fold = fold_index;
        log.epoch = epoch;
        int n_batches = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            const int batch_episodes = static_cast<int>(end - start);
            int pad_to = 0;
            for (size_t i = start; i < end; ++i) {
                pad_to = std::max(pad_to, train_episodes[order[i]].size());
            }

            model.params().zero_grad();
            Tensor batch_total;
            double ce_s = 0.0, kl_s = 0.0, ce_r = 0.0, kl_r = 0.0;
            for (size_t i = start; i < end; ++i) {
                const Episode& ep = train_episodes[order[i]];
                const MaskSet masks = build_masks(ep, pad_to);
                EpisodeForward fwd = model.forward_episode(ep, pad_to, /*training=*/true,
                                                           &dropout_rng, config.flags.multitask);
                LossParts resp = response_loss(fwd.response, ep, masks,
                                               config.response_prior_params, config.lambda_r,
                                               config.flags.kl_r);
                Tensor episode_total;
                if (config.flags.multitask) {
                    LossParts scene = scene_loss(fwd.scene, ep, masks, config.scene_prior_params,
                                                 config.lambda_s, config.flags.kl_s);
                    episode_total = joint_loss(scene.total, resp.total, config.flags);
                    ce_s += scene.ce.value();
                    kl_s += scene.kl.value();
                } else {
                    episode_total = joint_loss(Tensor(), resp.total, config.flags);
                }
                ce_r += resp.ce.value();
                kl_r += resp.kl.value();
                batch_total = batch_total.defined() ? add(batch_total, episode_total) : episode_total;
            }
            batch_total = mul_scalar(batch_total, 1.0 / batch_episodes);
            if (!std::isfinite(batch_total.value())) {
                throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(n_batches) + " of fold " +
                                      std::to_string(fold_index));
            }
            batch_total.backward();
            if (config.grad_clip) clip_gradients(model.params(), config.clip_norm);
            adamw_step(model.params(), config.lr, config.beta1, config.beta2, config.adam_eps,
                       config.weight_decay);

            log.l_ce_s += ce_s / batch_episodes;
            log.l_kl_s += kl_s / batch_episodes;
            log.l_ce_r += ce_r / batch_episodes;
            log.l_kl_r += kl_r / batch_episodes;
            log.total += batch_total.value();
            ++n_batches;
        }

        log.l_ce_s /= n_batches;
        log.l_kl_s /= n_batches;
        log.l_ce_r /= n_batches;
        log.l_kl_r /= n_batches;
        log.total /= n_batches;
        result.epoch_logs.push_back(log);
    }

    return TrainedFold{std::move(model), std::move(result)};
}

CrossValResult cross_validate(const std::vector<Episode>& episodes, ModelConfig model_config,
                              const TrainConfig& config, const std::optional<std::string>& out_dir,
                              const std::function<void(const std::string&)>& progress) {
    config.validate();
    const std::vector<FoldSplit> splits = split_folds(episodes, config.k_folds, config.seed);

    std::map<std::string, const Episode*> by_id;
    for (const Episode& e : episodes) by_id[e.episode_id] = &e;

    std::ofstream log_file;
    if (out_dir.has_value()) {
        std::filesystem::create_directories(*out_dir);
        log_file.open(*out_dir + "/train_log.jsonl", std::ios::binary);
        if (!log_file) throw IoError("cannot open training log in " + *out_dir);
    }

    CrossValResult result;
    std::vector<MetricsReport> fold_metrics;
    for (int f = 0; f < config.k_folds; ++f) {
        std::vector<Episode> train_set, test_set;
        for (const std::string& id : splits[static_cast<size_t>(f)].train_ids) {
            train_set.push_back(*by_id.at(id));
        }
        for (const std::string& id : splits[static_cast<size_t>(f)].test_ids) {
            test_set.push_back(*by_id.at(id));
        }

        TrainedFold trained = train_fold(train_set, model_config, config, f);
        trained.result.test_ids = splits[static_cast<size_t>(f)].test_ids;
        trained.result.metrics =
            evaluate_model(trained.model, test_set, config.flags.multitask);

        if (out_dir.has_value()) {
            const std::string ckpt = *out_dir + "/fold" + std::to_string(f) + ".ckpt";
            save_checkpoint(trained.model, ckpt);
            trained.result.checkpoint_path = ckpt;
            for (const EpochLog& log : trained.result.epoch_logs) {
                log_file << epoch_log_to_json(log) << '\n';
            }
        }
        if (progress) {
            const MetricsReport& m = trained.result.metrics;
            progress("fold " + std::to_string(f) + ": accuracy " +
                     (m.acc_average ? std::to_string(*m.acc_average) : std::string("-")) + " on " +
                     std::to_string(test_set.size()) + " held-out episodes");
        }
        fold_metrics.push_back(trained.result.metrics);
        result.folds.push_back(std::move(trained.result));
    }
    result.aggregate = aggregate_metrics(fold_metrics);

    if (out_dir.has_value()) {
        std::ofstream rep(*out_dir + "/metrics.json", std::ios::binary);
        if (!rep) throw IoError("cannot write metrics report in " + *out_dir);
        for (const FoldResult& fr : result.folds) {
            rep << metrics_to_json(fr.metrics) << '\n';
        }
        rep << metrics_to_json(result.aggregate) << '\n';
    }
    return result;
}

}  // namespace mhri
