#include "mhri/evaluator.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mhri/errors.hpp"

namespace mhri {

PredictionSet predict_responses(MhriModel& model, const std::vector<Episode>& episodes,
                                bool use_scene) {
    PredictionSet set;
    for (const Episode& ep : episodes) {
        EpisodeForward fwd = model.forward_episode(ep, ep.size(), /*training=*/false, nullptr,
                                                   use_scene);
        const MaskSet masks = build_masks(ep, ep.size());
        for (int i = 0; i < ep.size(); ++i) {
            const UtteranceRecord& u = ep.utterances[static_cast<size_t>(i)];
            set.predictions.push_back(static_cast<int>(read_response(fwd.response, i)));
            set.truth.push_back(static_cast<int>(u.response));
            set.categories.push_back(u.gaze.category);
            set.scored.push_back(masks.response_mask[static_cast<size_t>(i)]);
        }
    }
    return set;
}

MetricsReport evaluate_model(MhriModel& model, const std::vector<Episode>& episodes,
                             bool use_scene) {
    const PredictionSet set = predict_responses(model, episodes, use_scene);
    return compute_metrics(set.predictions, set.truth, set.categories, set.scored);
}

PredictionSet gaze_baseline_predictions(const std::vector<Episode>& episodes) {
    PredictionSet set;
    for (const Episode& ep : episodes) {
        const MaskSet masks = build_masks(ep, ep.size());
        for (int i = 0; i < ep.size(); ++i) {
            const UtteranceRecord& u = ep.utterances[static_cast<size_t>(i)];
            int decision = static_cast<int>(ResponseDecision::None);
            if (u.scene.speaker != kParticipantRobot && u.gaze.target.has_value() &&
                *u.gaze.target == kParticipantRobot) {
                decision = u.scene.speaker == kParticipantH1
                               ? static_cast<int>(ResponseDecision::RespondH1)
                               : static_cast<int>(ResponseDecision::RespondH2);
            }
            set.predictions.push_back(decision);
            set.truth.push_back(static_cast<int>(u.response));
            set.categories.push_back(u.gaze.category);
            set.scored.push_back(masks.response_mask[static_cast<size_t>(i)]);
        }
    }
    return set;
}

MetricsReport run_gaze_baseline(const std::vector<Episode>& episodes) {
    const PredictionSet set = gaze_baseline_predictions(episodes);
    return compute_metrics(set.predictions, set.truth, set.categories, set.scored);
}

LatencyReport measure_latency(MhriModel& model, const std::vector<Episode>& episodes,
                              int repetitions, bool use_scene) {
    if (repetitions < 1) throw ContractError("measure_latency: repetitions must be >= 1");
    if (episodes.empty()) throw ContractError("measure_latency: no episodes given");
    using clock = std::chrono::steady_clock;

    // Warm-up pass, discarded.
    for (const Episode& ep : episodes) {
        model.forward_episode(ep, ep.size(), false, nullptr, use_scene);
    }

    std::vector<double> per_decision;
    per_decision.reserve(static_cast<size_t>(repetitions) * episodes.size());
    for (int r = 0; r < repetitions; ++r) {
        for (const Episode& ep : episodes) {
            const auto t0 = clock::now();
            model.forward_episode(ep, ep.size(), false, nullptr, use_scene);
            const auto t1 = clock::now();
            const double seconds = std::chrono::duration<double>(t1 - t0).count();
            per_decision.push_back(seconds / ep.size());
        }
    }

    LatencyReport rep;
    rep.episodes = static_cast<int>(episodes.size());
    rep.repetitions = repetitions;
    double mean = 0.0;
    for (double x : per_decision) mean += x;
    mean /= static_cast<double>(per_decision.size());
    double var = 0.0;
    for (double x : per_decision) var += (x - mean) * (x - mean);
    var /= static_cast<double>(per_decision.size());
    rep.mean_seconds = mean;
    rep.std_seconds = std::sqrt(var);
    return rep;
}

namespace {

std::string shortest_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

void export_embeddings(MhriModel& model, const std::vector<Episode>& episodes,
                       const std::string& path, bool use_scene) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open embedding export file: " + path);

    const int dm = model.config().d_model;
    out << "episode_id,index,speaker,listener_h1,listener_h2,listener_r,response,category";
    for (int c = 0; c < dm; ++c) out << ",h" << c;
    out << '\n';

    for (const Episode& ep : episodes) {
        EpisodeForward fwd = model.forward_episode(ep, ep.size(), false, nullptr, use_scene);
        const MaskSet masks = build_masks(ep, ep.size());
        for (int i = 0; i < ep.size(); ++i) {
            if (!masks.response_mask[static_cast<size_t>(i)]) continue;
            const UtteranceRecord& u = ep.utterances[static_cast<size_t>(i)];
            out << ep.episode_id << ',' << i << ',' << u.scene.speaker << ','
                << static_cast<int>(u.scene.listeners[0]) << ','
                << static_cast<int>(u.scene.listeners[1]) << ','
                << static_cast<int>(u.scene.listeners[2]) << ','
                << static_cast<int>(u.response) << ',' << category_code(u.gaze.category);
            for (int c = 0; c < dm; ++c) out << ',' << shortest_double(fwd.hidden.values.at(i, c));
            out << '\n';
        }
    }
    if (!out) throw IoError("embedding export write failed: " + path);
}

const std::array<std::pair<char, AblationFlags>, 6>& ablation_grid() {
    static const std::array<std::pair<char, AblationFlags>, 6> grid{{
        {'a', AblationFlags{false, false, false}},
        {'b', AblationFlags{false, false, true}},
        {'c', AblationFlags{true, false, false}},
        {'d', AblationFlags{true, false, true}},
        {'e', AblationFlags{true, true, false}},
        {'f', AblationFlags{true, true, true}},
    }};
    return grid;
}

AblationResult run_ablation(const std::vector<Episode>& episodes, ModelConfig model_config,
                            TrainConfig config, const std::vector<uint64_t>& seeds,
                            const std::function<void(const std::string&)>& progress) {
    if (seeds.empty()) throw ConfigError("run_ablation: at least one seed required");

    AblationResult result;
    for (const auto& [row_id, flags] : ablation_grid()) {
        std::vector<CrossValResult> runs;
        std::vector<MetricsReport> per_seed;
        for (uint64_t seed : seeds) {
            TrainConfig row_config = config;
            row_config.flags = flags;
            row_config.seed = seed;
            try {
                CrossValResult cv = cross_validate(episodes, model_config, row_config);
                per_seed.push_back(cv.aggregate);
                runs.push_back(std::move(cv));
            } catch (const std::exception& ex) {
                throw DivergenceError("ablation row (" + std::string(1, row_id) + "), seed " +
                                      std::to_string(seed) + ": " + ex.what());
            }
            if (progress) {
                progress("row (" + std::string(1, row_id) + ") seed " + std::to_string(seed) +
                         ": accuracy " +
                         std::to_string(per_seed.back().acc_average.value_or(-1.0)));
            }
        }
        AblationRow row;
        row.row_id = row_id;
        row.flags = flags;
        row.metrics = aggregate_metrics(per_seed);
        result.rows.push_back(row);
        result.runs.push_back(std::move(runs));
    }
    return result;
}

std::string render_ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "    | M | KLs | KLr | AC (G != L) | AC (G = L) | AC (Avg)\n";
    os << "----+---+-----+-----+-------------+------------+---------\n";
    for (const AblationRow& r : rows) {
        auto acc = [](const std::optional<double>& v) {
            if (!v.has_value()) return std::string("   -");
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%4.1f", *v * 100.0);
            return std::string(buf);
        };
        char line[160];
        std::snprintf(line, sizeof(line), "(%c) | %c |  %c  |  %c  |        %s |       %s |    %s\n",
                      r.row_id, r.flags.multitask ? 'x' : ' ', r.flags.kl_s ? 'x' : ' ',
                      r.flags.kl_r ? 'x' : ' ', acc(r.metrics.acc_misaligned).c_str(),
                      acc(r.metrics.acc_aligned).c_str(), acc(r.metrics.acc_average).c_str());
        os << line;
    }
    return os.str();
}

}  // namespace mhri
