#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mhri {

// Participant class indices: two humans and the robot.
constexpr int kParticipantH1 = 0;
constexpr int kParticipantH2 = 1;
constexpr int kParticipantRobot = 2;
constexpr int kNumParticipants = 3;

/// Who is speaking and to whom. Listeners are a multi-label bit vector
/// because utterances can address several participants at once.
struct SceneLabel {
    int speaker = kParticipantH1;
    std::array<uint8_t, 3> listeners{0, 0, 0};

    bool robot_addressed() const { return listeners[kParticipantRobot] != 0; }
    int listener_count() const { return listeners[0] + listeners[1] + listeners[2]; }
};

/// Whether the robot should respond, and to which human.
enum class ResponseDecision : int {
    None = 0,
    RespondH1 = 1,
    RespondH2 = 2,
    RespondBoth = 3,
};

/// Gaze/addressee alignment of one utterance.
enum class GazeCategory {
    Consistency,       // gaze target is one of the listeners
    LookWithoutSpeak,  // gaze target present but not a listener
    SpeakWithoutLook,  // no focused gaze target
};

/// Classifies the gaze/listener relationship; total over its input space.
GazeCategory categorize_alignment(const std::optional<int>& gaze_target,
                                  const std::array<uint8_t, 3>& listeners);

const char* category_code(GazeCategory c);                 // "C" | "LWS" | "SWL"
GazeCategory category_from_code(const std::string& code);

struct GazeInfo {
    std::optional<int> target;  // absent = unfocused gaze
    GazeCategory category = GazeCategory::Consistency;
};

struct UtteranceRecord {
    int index = 0;
    std::vector<double> video_feat;
    std::vector<double> text_feat;
    SceneLabel scene;
    GazeInfo gaze;
    ResponseDecision response = ResponseDecision::None;
    bool is_casual = false;
    double start_s = 0.0;
    double end_s = 0.0;
};

/// One recorded interaction session: an ordered utterance sequence with a
/// fixed feature dimensionality.
struct Episode {
    std::string episode_id;
    int d_v = 0;
    int d_t = 0;
    std::vector<UtteranceRecord> utterances;

    int size() const { return static_cast<int>(utterances.size()); }

    /// Enforces every type invariant; throws SchemaError naming the episode
    /// and utterance index on the first violation.
    void validate() const;
};

/// Loss masks for one padded episode. scene_mask covers real utterances;
/// response_mask additionally drops robot-spoken ones.
struct MaskSet {
    std::vector<uint8_t> scene_mask;
    std::vector<uint8_t> response_mask;
};

/// Builds masks for an episode padded to `pad_to` positions.
MaskSet build_masks(const Episode& episode, int pad_to);

/// Reads a line-delimited dataset; every loaded episode is validated.
std::vector<Episode> load_dataset(const std::string& path);

/// Writes the canonical line-delimited form; save then load is the identity
/// and re-saving reproduces the bytes.
void save_dataset(const std::vector<Episode>& episodes, const std::string& path);

std::string episode_to_json_line(const Episode& episode);
Episode episode_from_json_line(const std::string& line);

/// One cross-validation fold, as episode ids.
struct FoldSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

/// Episode-level k-fold partition: deterministic under `seed`, fold sizes
/// differ by at most one, test sets are disjoint and cover every episode.
/// Episodes are canonicalized by id first, so input order is irrelevant.
std::vector<FoldSplit> split_folds(const std::vector<Episode>& episodes, int k, uint64_t seed);

/// Aggregate corpus statistics. Category / multi-listener / casual fractions
/// are over human utterances; robot turns are derived replies.
struct StatsReport {
    int n_episodes = 0;
    int n_utterances = 0;
    std::array<int, 3> utterances_per_speaker{0, 0, 0};
    int n_human_utterances = 0;
    std::array<int, 3> category_counts{0, 0, 0};  // C, LWS, SWL over human utterances
    double frac_consistency = 0.0;
    double frac_look_without_speak = 0.0;
    double frac_speak_without_look = 0.0;
    double multi_listener_fraction = 0.0;
    double casual_fraction = 0.0;
    double total_duration_s = 0.0;
};

StatsReport dataset_stats(const std::vector<Episode>& episodes);

/// Human-readable rendering of a StatsReport.
std::string render_stats(const StatsReport& stats);

}  // namespace mhri
