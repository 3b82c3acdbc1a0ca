#include "mhri/synth.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "mhri/errors.hpp"

namespace mhri {

namespace {

constexpr int kVideoSignalWidth = 6;  // speaker one-hot + gaze one-hot
constexpr int kTextSignalWidth = kNumActs + 3;

void check_prob(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError(std::string("SynthConfig: ") + name + " must lie in [0, 1]");
    }
}

int other_human(int speaker) { return speaker == kParticipantH1 ? kParticipantH2 : kParticipantH1; }

ResponseDecision respond_to(int speaker) {
    return speaker == kParticipantH1 ? ResponseDecision::RespondH1 : ResponseDecision::RespondH2;
}

}  // namespace

void SynthConfig::validate() const {
    if (n_episodes <= 0) throw ConfigError("SynthConfig: n_episodes must be positive");
    if (min_utterances <= 0 || max_utterances < min_utterances) {
        throw ConfigError("SynthConfig: invalid utterance range");
    }
    if (d_v < 8 || d_t < 8) {
        throw ConfigError("SynthConfig: d_v and d_t must be >= 8 to fit the signal blocks");
    }
    check_prob(p_consistency, "p_consistency");
    check_prob(p_lws, "p_lws");
    check_prob(p_swl, "p_swl");
    check_prob(p_multi_listener, "p_multi_listener");
    check_prob(p_casual, "p_casual");
    check_prob(p_text_cue, "p_text_cue");
    check_prob(p_respond_exception, "p_respond_exception");
    if (std::abs(p_consistency + p_lws + p_swl - 1.0) > 1e-9) {
        throw ConfigError("SynthConfig: category probabilities must sum to 1");
    }
    if (noise_sigma < 0.0) throw ConfigError("SynthConfig: noise_sigma must be >= 0");
    // Multi-listener turns cannot be LookWithoutSpeak (both non-speakers are
    // already addressed), so the requested rate must be reachable from the
    // other two categories.
    if (p_multi_listener > p_consistency + p_swl + 1e-12) {
        throw ConfigError("SynthConfig: p_multi_listener exceeds p_consistency + p_swl");
    }
}

std::pair<std::vector<double>, std::vector<double>> emit_features(const SceneLabel& scene,
                                                                  const GazeInfo& gaze,
                                                                  UtteranceAct act,
                                                                  const SynthConfig& config,
                                                                  RngStream& rng) {
    std::vector<double> video(static_cast<size_t>(config.d_v), 0.0);
    std::vector<double> text(static_cast<size_t>(config.d_t), 0.0);

    video[static_cast<size_t>(scene.speaker)] = 1.0;
    if (gaze.target.has_value()) video[static_cast<size_t>(3 + *gaze.target)] = 1.0;

    text[static_cast<size_t>(static_cast<int>(act))] = 1.0;
    if (rng.bernoulli(config.p_text_cue)) {
        for (int i = 0; i < kNumParticipants; ++i) {
            if (scene.listeners[static_cast<size_t>(i)]) {
                text[static_cast<size_t>(kNumActs + i)] = 1.0;
            }
        }
    }

    if (config.noise_sigma > 0.0) {
        for (double& x : video) x += config.noise_sigma * rng.normal();
        for (double& x : text) x += config.noise_sigma * rng.normal();
    }
    return {std::move(video), std::move(text)};
}

namespace {

struct DrawnUtterance {
    SceneLabel scene;
    GazeInfo gaze;
    UtteranceAct act = UtteranceAct::Chat;
    ResponseDecision response = ResponseDecision::None;
    bool casual = false;
};

DrawnUtterance draw_human_utterance(const SynthConfig& cfg, TurnState& state, RngStream& rng) {
    DrawnUtterance u;

    // Speaker: mild preference for handing the turn to the other human.
    if (state.previous_speaker.has_value() && *state.previous_speaker != kParticipantRobot) {
        const int prev = *state.previous_speaker;
        u.scene.speaker = rng.bernoulli(0.3) ? prev : other_human(prev);
    } else {
        u.scene.speaker = rng.bernoulli(0.5) ? kParticipantH1 : kParticipantH2;
    }
    u.casual = rng.bernoulli(cfg.p_casual);

    // Category first; multi-listener turns are drawn only from the two
    // categories that can carry them, at a rate that keeps the configured
    // marginal exact.
    const int category = rng.categorical({cfg.p_consistency, cfg.p_lws, cfg.p_swl});
    bool multi = false;
    if (category != 1) {
        const double p_non_lws = cfg.p_consistency + cfg.p_swl;
        if (p_non_lws > 0.0) multi = rng.bernoulli(cfg.p_multi_listener / p_non_lws);
    }

    if (multi) {
        for (int i = 0; i < kNumParticipants; ++i) {
            u.scene.listeners[static_cast<size_t>(i)] = i != u.scene.speaker;
        }
    } else {
        // Casual talk leans human-to-human, task-oriented talk at the robot.
        const double p_robot = u.casual ? 0.2 : 0.65;
        const int target = rng.bernoulli(p_robot) ? kParticipantRobot : other_human(u.scene.speaker);
        u.scene.listeners[static_cast<size_t>(target)] = 1;
    }

    switch (category) {
        case 0: {  // Consistency: gaze at one of the listeners
            std::vector<double> w;
            std::vector<int> choices;
            for (int i = 0; i < kNumParticipants; ++i) {
                if (u.scene.listeners[static_cast<size_t>(i)]) {
                    choices.push_back(i);
                    w.push_back(1.0);
                }
            }
            u.gaze.target = choices[static_cast<size_t>(rng.categorical(w))];
            break;
        }
        case 1: {  // LookWithoutSpeak: gaze at the non-listener participant
            for (int i = 0; i < kNumParticipants; ++i) {
                if (i != u.scene.speaker && !u.scene.listeners[static_cast<size_t>(i)]) {
                    u.gaze.target = i;
                    break;
                }
            }
            break;
        }
        default:  // SpeakWithoutLook: unfocused gaze
            u.gaze.target = std::nullopt;
            break;
    }
    u.gaze.category = categorize_alignment(u.gaze.target, u.scene.listeners);

    if (u.scene.robot_addressed()) {
        if (rng.bernoulli(cfg.p_respond_exception)) {
            // Rhetorical remark at the robot: no response expected.
            u.act = UtteranceAct::Exclamation;
            u.response = ResponseDecision::None;
        } else if (multi) {
            // Jointly addressed question -> answer both; side remark -> the
            // speaker alone.
            if (rng.bernoulli(0.5)) {
                u.act = UtteranceAct::Question;
                u.response = ResponseDecision::RespondBoth;
            } else {
                u.act = rng.bernoulli(0.6) ? UtteranceAct::Chat : UtteranceAct::Reply;
                u.response = respond_to(u.scene.speaker);
            }
        } else {
            const int a = rng.categorical({0.8, 0.1, 0.0, 0.1});  // no exclamations here
            u.act = static_cast<UtteranceAct>(a);
            u.response = respond_to(u.scene.speaker);
        }
    } else {
        u.response = ResponseDecision::None;
        if (u.casual) {
            u.act = static_cast<UtteranceAct>(rng.categorical({0.05, 0.15, 0.2, 0.6}));
        } else {
            u.act = static_cast<UtteranceAct>(rng.categorical({0.3, 0.4, 0.1, 0.2}));
        }
    }

    state.previous_speaker = u.scene.speaker;
    state.pending_robot_reply = u.response != ResponseDecision::None;
    state.pending_target = u.response;
    return u;
}

DrawnUtterance draw_robot_reply(TurnState& state, RngStream& rng) {
    DrawnUtterance u;
    u.scene.speaker = kParticipantRobot;
    switch (state.pending_target) {
        case ResponseDecision::RespondH1:
            u.scene.listeners[kParticipantH1] = 1;
            break;
        case ResponseDecision::RespondH2:
            u.scene.listeners[kParticipantH2] = 1;
            break;
        default:
            u.scene.listeners[kParticipantH1] = 1;
            u.scene.listeners[kParticipantH2] = 1;
            break;
    }
    // The teleoperated robot faces whoever it answers.
    std::vector<int> choices;
    std::vector<double> w;
    for (int i = 0; i < kNumParticipants; ++i) {
        if (u.scene.listeners[static_cast<size_t>(i)]) {
            choices.push_back(i);
            w.push_back(1.0);
        }
    }
    u.gaze.target = choices[static_cast<size_t>(rng.categorical(w))];
    u.gaze.category = GazeCategory::Consistency;
    u.act = UtteranceAct::Reply;
    u.response = ResponseDecision::None;
    u.casual = false;

    state.previous_speaker = kParticipantRobot;
    state.pending_robot_reply = false;
    state.pending_target = ResponseDecision::None;
    return u;
}

}  // namespace

Episode generate_episode(const SynthConfig& config, int episode_index, RngStream& rng) {
    Episode ep;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "ep%04d", episode_index);
    ep.episode_id = buf;
    ep.d_v = config.d_v;
    ep.d_t = config.d_t;

    const int count = rng.uniform_int(config.min_utterances, config.max_utterances);
    const double mean_count = 0.5 * (config.min_utterances + config.max_utterances);
    const double slot = 180.0 / mean_count;

    TurnState state;
    double t = 0.0;
    for (int n = 0; n < count; ++n) {
        DrawnUtterance d = state.pending_robot_reply ? draw_robot_reply(state, rng)
                                                     : draw_human_utterance(config, state, rng);
        UtteranceRecord u;
        u.index = n;
        u.scene = d.scene;
        u.gaze = d.gaze;
        u.response = d.response;
        u.is_casual = d.casual;
        auto [video, text] = emit_features(d.scene, d.gaze, d.act, config, rng);
        u.video_feat = std::move(video);
        u.text_feat = std::move(text);
        u.start_s = t;
        u.end_s = t + slot * (0.55 + 0.4 * rng.uniform());
        t += slot;
        ep.utterances.push_back(std::move(u));
    }
    return ep;
}

std::vector<Episode> generate_dataset(const SynthConfig& config) {
    config.validate();
    std::vector<Episode> episodes;
    episodes.reserve(static_cast<size_t>(config.n_episodes));
    for (int i = 0; i < config.n_episodes; ++i) {
        RngStream rng(derive_seed(config.seed, static_cast<uint64_t>(i)));
        Episode ep = generate_episode(config, i, rng);
        ep.validate();
        episodes.push_back(std::move(ep));
    }
    return episodes;
}

}  // namespace mhri
