#include "mhri/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mhri/errors.hpp"
#include "mhri/rng.hpp"

namespace mhri {

using nlohmann::json;

GazeCategory categorize_alignment(const std::optional<int>& gaze_target,
                                  const std::array<uint8_t, 3>& listeners) {
    if (!gaze_target.has_value()) return GazeCategory::SpeakWithoutLook;
    return listeners[static_cast<size_t>(*gaze_target)] ? GazeCategory::Consistency
                                                        : GazeCategory::LookWithoutSpeak;
}

const char* category_code(GazeCategory c) {
    switch (c) {
        case GazeCategory::Consistency: return "C";
        case GazeCategory::LookWithoutSpeak: return "LWS";
        case GazeCategory::SpeakWithoutLook: return "SWL";
    }
    return "C";
}

GazeCategory category_from_code(const std::string& code) {
    if (code == "C") return GazeCategory::Consistency;
    if (code == "LWS") return GazeCategory::LookWithoutSpeak;
    if (code == "SWL") return GazeCategory::SpeakWithoutLook;
    throw SchemaError("unknown gaze category code: '" + code + "'");
}

namespace {

void fail(const std::string& episode_id, int index, const std::string& what) {
    throw SchemaError("episode '" + episode_id + "', utterance " + std::to_string(index) + ": " +
                      what);
}

void check_finite(const std::vector<double>& v, const std::string& episode_id, int index,
                  const char* field) {
    for (double x : v) {
        if (!std::isfinite(x)) fail(episode_id, index, std::string("non-finite value in ") + field);
    }
}

}  // namespace

void Episode::validate() const {
    if (episode_id.empty()) throw SchemaError("episode with empty episode_id");
    if (utterances.empty()) throw SchemaError("episode '" + episode_id + "' has no utterances");
    if (d_v <= 0 || d_t <= 0) {
        throw SchemaError("episode '" + episode_id + "': feature dims must be positive");
    }
    for (int n = 0; n < size(); ++n) {
        const UtteranceRecord& u = utterances[static_cast<size_t>(n)];
        if (u.index != n) fail(episode_id, n, "indices not contiguous from 0");
        if (static_cast<int>(u.video_feat.size()) != d_v) {
            fail(episode_id, n, "video_feat length does not match d_v");
        }
        if (static_cast<int>(u.text_feat.size()) != d_t) {
            fail(episode_id, n, "text_feat length does not match d_t");
        }
        check_finite(u.video_feat, episode_id, n, "video_feat");
        check_finite(u.text_feat, episode_id, n, "text_feat");

        const SceneLabel& s = u.scene;
        if (s.speaker < 0 || s.speaker >= kNumParticipants) {
            fail(episode_id, n, "speaker index out of range");
        }
        if (s.listeners[static_cast<size_t>(s.speaker)]) fail(episode_id, n, "self-listener");
        if (s.listener_count() == 0) fail(episode_id, n, "empty listener set");

        if (u.gaze.target.has_value() &&
            (*u.gaze.target < 0 || *u.gaze.target >= kNumParticipants)) {
            fail(episode_id, n, "gaze target out of range");
        }
        if (u.gaze.category != categorize_alignment(u.gaze.target, s.listeners)) {
            fail(episode_id, n, "gaze category inconsistent with target/listeners");
        }

        if (s.speaker == kParticipantRobot && u.response != ResponseDecision::None) {
            fail(episode_id, n, "robot utterance with non-None response");
        }
        const int r = static_cast<int>(u.response);
        if (r < 0 || r > 3) fail(episode_id, n, "response decision out of range");
        if (!(u.end_s > u.start_s)) fail(episode_id, n, "end_s must exceed start_s");
        if (!std::isfinite(u.start_s) || !std::isfinite(u.end_s)) {
            fail(episode_id, n, "non-finite timestamps");
        }
    }
}

MaskSet build_masks(const Episode& episode, int pad_to) {
    const int n = episode.size();
    if (pad_to < n) {
        throw ContractError("build_masks: pad_to " + std::to_string(pad_to) +
                            " smaller than episode length " + std::to_string(n));
    }
    MaskSet masks;
    masks.scene_mask.assign(static_cast<size_t>(pad_to), 0);
    masks.response_mask.assign(static_cast<size_t>(pad_to), 0);
    for (int i = 0; i < n; ++i) {
        masks.scene_mask[static_cast<size_t>(i)] = 1;
        masks.response_mask[static_cast<size_t>(i)] =
            episode.utterances[static_cast<size_t>(i)].scene.speaker != kParticipantRobot;
    }
    return masks;
}

namespace {

json utterance_to_json(const UtteranceRecord& u) {
    json j;
    j["index"] = u.index;
    j["video_feat"] = u.video_feat;
    j["text_feat"] = u.text_feat;
    j["speaker"] = u.scene.speaker;
    j["listeners"] = {u.scene.listeners[0], u.scene.listeners[1], u.scene.listeners[2]};
    if (u.gaze.target.has_value()) {
        j["gaze_target"] = *u.gaze.target;
    } else {
        j["gaze_target"] = nullptr;
    }
    j["category"] = category_code(u.gaze.category);
    j["response"] = static_cast<int>(u.response);
    j["casual"] = u.is_casual;
    j["start_s"] = u.start_s;
    j["end_s"] = u.end_s;
    return j;
}

UtteranceRecord utterance_from_json(const json& j) {
    UtteranceRecord u;
    u.index = j.at("index").get<int>();
    u.video_feat = j.at("video_feat").get<std::vector<double>>();
    u.text_feat = j.at("text_feat").get<std::vector<double>>();
    u.scene.speaker = j.at("speaker").get<int>();
    const auto listeners = j.at("listeners").get<std::vector<int>>();
    if (listeners.size() != 3) throw SchemaError("listeners must have exactly 3 entries");
    for (size_t i = 0; i < 3; ++i) {
        if (listeners[i] != 0 && listeners[i] != 1) throw SchemaError("listener bits must be 0/1");
        u.scene.listeners[i] = static_cast<uint8_t>(listeners[i]);
    }
    if (j.at("gaze_target").is_null()) {
        u.gaze.target = std::nullopt;
    } else {
        u.gaze.target = j.at("gaze_target").get<int>();
    }
    u.gaze.category = category_from_code(j.at("category").get<std::string>());
    u.response = static_cast<ResponseDecision>(j.at("response").get<int>());
    u.is_casual = j.at("casual").get<bool>();
    u.start_s = j.at("start_s").get<double>();
    u.end_s = j.at("end_s").get<double>();
    return u;
}

}  // namespace

std::string episode_to_json_line(const Episode& episode) {
    json j;
    j["episode_id"] = episode.episode_id;
    j["d_v"] = episode.d_v;
    j["d_t"] = episode.d_t;
    json utts = json::array();
    for (const UtteranceRecord& u : episode.utterances) utts.push_back(utterance_to_json(u));
    j["utterances"] = std::move(utts);
    return j.dump();
}

Episode episode_from_json_line(const std::string& line) {
    json j = json::parse(line);
    Episode e;
    e.episode_id = j.at("episode_id").get<std::string>();
    e.d_v = j.at("d_v").get<int>();
    e.d_t = j.at("d_t").get<int>();
    for (const json& ju : j.at("utterances")) e.utterances.push_back(utterance_from_json(ju));
    return e;
}

std::vector<Episode> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    std::vector<Episode> episodes;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Episode e;
        try {
            e = episode_from_json_line(line);
        } catch (const SchemaError&) {
            throw;
        } catch (const std::exception& ex) {
            throw ParseError("line " + std::to_string(line_no) + ": " + ex.what());
        }
        e.validate();
        episodes.push_back(std::move(e));
    }
    return episodes;
}

void save_dataset(const std::vector<Episode>& episodes, const std::string& path) {
    for (const Episode& e : episodes) {
        for (const UtteranceRecord& u : e.utterances) {
            for (double x : u.video_feat) {
                if (!std::isfinite(x)) {
                    throw SerializationError("episode '" + e.episode_id +
                                             "': non-finite video feature value");
                }
            }
            for (double x : u.text_feat) {
                if (!std::isfinite(x)) {
                    throw SerializationError("episode '" + e.episode_id +
                                             "': non-finite text feature value");
                }
            }
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const Episode& e : episodes) out << episode_to_json_line(e) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

std::vector<FoldSplit> split_folds(const std::vector<Episode>& episodes, int k, uint64_t seed) {
    if (k < 2) throw ConfigError("split_folds: k must be >= 2, got " + std::to_string(k));
    if (static_cast<int>(episodes.size()) < k) {
        throw ConfigError("split_folds: need at least " + std::to_string(k) + " episodes, got " +
                          std::to_string(episodes.size()));
    }
    // Canonicalize by id so the partition is independent of input order.
    std::vector<std::string> ids;
    ids.reserve(episodes.size());
    std::set<std::string> uniq;
    for (const Episode& e : episodes) {
        if (!uniq.insert(e.episode_id).second) {
            throw SchemaError("split_folds: duplicate episode_id '" + e.episode_id + "'");
        }
        ids.push_back(e.episode_id);
    }
    std::sort(ids.begin(), ids.end());
    RngStream rng(derive_seed(seed, 0x666f6c64 /* "fold" */));
    rng.shuffle(ids);

    std::vector<std::vector<std::string>> test_sets(static_cast<size_t>(k));
    for (size_t i = 0; i < ids.size(); ++i) {
        test_sets[i % static_cast<size_t>(k)].push_back(ids[i]);
    }
    std::vector<FoldSplit> folds;
    for (int f = 0; f < k; ++f) {
        FoldSplit split;
        split.test_ids = test_sets[static_cast<size_t>(f)];
        for (int g = 0; g < k; ++g) {
            if (g == f) continue;
            const auto& t = test_sets[static_cast<size_t>(g)];
            split.train_ids.insert(split.train_ids.end(), t.begin(), t.end());
        }
        std::sort(split.train_ids.begin(), split.train_ids.end());
        std::sort(split.test_ids.begin(), split.test_ids.end());
        folds.push_back(std::move(split));
    }
    return folds;
}

StatsReport dataset_stats(const std::vector<Episode>& episodes) {
    if (episodes.empty()) throw ConfigError("dataset_stats: empty episode list");
    StatsReport s;
    s.n_episodes = static_cast<int>(episodes.size());
    int multi = 0, casual = 0;
    for (const Episode& e : episodes) {
        s.n_utterances += e.size();
        double ep_end = 0.0;
        for (const UtteranceRecord& u : e.utterances) {
            s.utterances_per_speaker[static_cast<size_t>(u.scene.speaker)] += 1;
            ep_end = std::max(ep_end, u.end_s);
            if (u.scene.speaker == kParticipantRobot) continue;
            s.n_human_utterances += 1;
            s.category_counts[static_cast<size_t>(u.gaze.category)] += 1;
            if (u.scene.listener_count() > 1) ++multi;
            if (u.is_casual) ++casual;
        }
        s.total_duration_s += ep_end;
    }
    if (s.n_human_utterances > 0) {
        const double h = static_cast<double>(s.n_human_utterances);
        s.frac_consistency = s.category_counts[0] / h;
        s.frac_look_without_speak = s.category_counts[1] / h;
        s.frac_speak_without_look = s.category_counts[2] / h;
        s.multi_listener_fraction = multi / h;
        s.casual_fraction = casual / h;
    }
    return s;
}

std::string render_stats(const StatsReport& s) {
    std::ostringstream os;
    os << "episodes:             " << s.n_episodes << "\n"
       << "utterances:           " << s.n_utterances << " (H1 " << s.utterances_per_speaker[0]
       << ", H2 " << s.utterances_per_speaker[1] << ", robot " << s.utterances_per_speaker[2]
       << ")\n"
       << "total duration:       " << s.total_duration_s / 60.0 << " min\n"
       << "human utterances:     " << s.n_human_utterances << "\n"
       << "  consistency:        " << s.frac_consistency << "\n"
       << "  look w/o speak:     " << s.frac_look_without_speak << "\n"
       << "  speak w/o look:     " << s.frac_speak_without_look << "\n"
       << "  multi-listener:     " << s.multi_listener_fraction << "\n"
       << "  casual:             " << s.casual_fraction << "\n";
    return os.str();
}

}  // namespace mhri
