#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mhri/data.hpp"
#include "mhri/rng.hpp"

namespace mhri {

/// Dialogue-act vocabulary used by the text feature block.
enum class UtteranceAct : int {
    Question = 0,
    Reply = 1,
    Exclamation = 2,
    Chat = 3,
};
constexpr int kNumActs = 4;

/**
 * Generator settings. Category probabilities must sum to 1; feature widths
 * leave room for the signal blocks (speaker/gaze one-hots in video, act and
 * addressee-cue blocks in text) plus at least one noise dimension.
 */
struct SynthConfig {
    int n_episodes = 60;
    int min_utterances = 14;
    int max_utterances = 23;
    int d_v = 16;
    int d_t = 16;
    double p_consistency = 0.75;
    double p_lws = 0.15;
    double p_swl = 0.10;
    double p_multi_listener = 0.10;
    double p_casual = 0.167;
    double p_text_cue = 0.9;
    double noise_sigma = 0.3;
    // A robot-addressed utterance is occasionally rhetorical: labeled None
    // and spoken as an exclamation, so the exception is recoverable from the
    // act block rather than being label noise.
    double p_respond_exception = 0.05;
    uint64_t seed = 42;

    void validate() const;
};

/// Rolling generator state while emitting one episode.
struct TurnState {
    std::optional<int> previous_speaker;
    bool pending_robot_reply = false;
    ResponseDecision pending_target = ResponseDecision::None;
};

/// Builds the feature pair for one utterance: video carries speaker and
/// gaze one-hot blocks, text carries the act block plus (with probability
/// p_text_cue) the true listener bits; everything gets N(0, sigma) noise.
std::pair<std::vector<double>, std::vector<double>> emit_features(const SceneLabel& scene,
                                                                  const GazeInfo& gaze,
                                                                  UtteranceAct act,
                                                                  const SynthConfig& config,
                                                                  RngStream& rng);

/// Generates one episode with a stream derived from (seed, episode_index),
/// so episodes are independent of generation order.
Episode generate_episode(const SynthConfig& config, int episode_index, RngStream& rng);

/// Full dataset: n_episodes validated episodes, a pure function of config.
std::vector<Episode> generate_dataset(const SynthConfig& config);

}  // namespace mhri
