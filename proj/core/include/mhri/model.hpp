#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mhri/data.hpp"
#include "mhri/ops.hpp"
#include "mhri/optim.hpp"
#include "mhri/tensor.hpp"

namespace mhri {

/// How the response head consumes the scene head's output.
enum class SceneCoupling {
    Soft,      // probabilities, gradients flow back into the scene head
    Detached,  // probabilities as constants, no gradient coupling
    Hard,      // one-hot argmax speaker + thresholded listener bits
};

const char* coupling_name(SceneCoupling c);
SceneCoupling coupling_from_name(const std::string& name);

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2;
    int d_v = 16;
    int d_t = 16;
    int max_seq = 64;
    double dropout = 0.1;
    // Initial preference of the fusion cross-attention for the query's own
    // video position; the surrounding sequence stays reachable and the
    // query/key projections can learn to override it.
    double fuse_local_bias = 4.0;
    SceneCoupling coupling = SceneCoupling::Soft;
    uint64_t seed = 0;

    void validate() const;
};

/// Backbone output: contextual hidden states plus the validity mask that
/// every downstream loss and metric must respect.
struct HiddenSeq {
    Tensor values;  // [N_pad × d_model]
    std::vector<uint8_t> mask;
};

/// Per-utterance scene outputs (speaker softmax rows, listener logistics),
/// kept as graph tensors so losses and the response head stay differentiable.
struct ScenePrediction {
    Tensor speaker_logits;   // [N×3]
    Tensor speaker_probs;    // softmax rows
    Tensor listener_logits;  // [N×3]
    Tensor listener_probs;   // elementwise logistic
};

/// Per-utterance response distribution over {None, RespondH1, RespondH2,
/// RespondBoth}.
struct ResponsePrediction {
    Tensor logits;  // [N×4]
    Tensor probs;   // softmax rows
};

/// Optional capture of attention weights from one forward pass.
struct ForwardTrace {
    AttentionTrace fuse_attention;
    std::vector<AttentionTrace> block_attention;
};

struct EpisodeForward {
    HiddenSeq hidden;
    ScenePrediction scene;
    ResponsePrediction response;
};

/// Discrete readouts from the prediction tensors.
struct SceneReadout {
    int speaker;
    std::array<uint8_t, 3> listeners;
};
SceneReadout read_scene(const ScenePrediction& pred, int row);
ResponseDecision read_response(const ResponsePrediction& pred, int row);

/**
 * Cross-attention fusion of the video and text streams, a causal decoder
 * stack, and the two task heads, all over one shared parameter set.
 *
 * The fusion block projects both streams to d_model, uses the text stream
 * as queries against video keys/values, and maps the concatenation of the
 * attended result and the projected text back to d_model. The decoder adds
 * learned positional embeddings and runs pre-norm blocks with causal
 * self-attention and a 4x feed-forward. Invalid (padded) positions get
 * exactly zero attention weight everywhere.
 */
class MhriModel {
public:
    explicit MhriModel(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    /// Fusion block alone; exposed for inspection and testing.
    Tensor fuse(const Tensor& video_seq, const Tensor& text_seq, const std::vector<uint8_t>& valid,
                bool training = false, RngStream* dropout_rng = nullptr,
                ForwardTrace* trace = nullptr);

    /// Decoder stack over fused inputs. Throws CapacityError beyond max_seq.
    HiddenSeq backbone_forward(const Tensor& fused, const std::vector<uint8_t>& mask,
                               bool training = false, RngStream* dropout_rng = nullptr,
                               ForwardTrace* trace = nullptr);

    ScenePrediction predict_scene(const HiddenSeq& hidden);

    /// Response head over hidden states plus the (soft) scene prediction.
    /// When `use_scene` is false (single-task ablation) the scene block is
    /// replaced by a constant zero block of the same width.
    ResponsePrediction predict_response(const HiddenSeq& hidden, const ScenePrediction& scene,
                                        bool use_scene = true);

    /// Full pipeline for one episode padded to `pad_to` positions.
    EpisodeForward forward_episode(const Episode& episode, int pad_to, bool training = false,
                                   RngStream* dropout_rng = nullptr, bool use_scene = true,
                                   ForwardTrace* trace = nullptr);

    /// Builds the padded [pad_to × d] input tensors for one episode.
    static std::pair<Tensor, Tensor> episode_inputs(const Episode& episode, int pad_to);

private:
    Tensor p(const std::string& name) { return params_.at(name); }
    Tensor attn_block(const std::string& prefix, const Tensor& q_in, const Tensor& kv_in,
                      const std::vector<uint8_t>& valid, double self_bias, AttentionTrace* trace);

    ModelConfig config_;
    ParamSet params_;
};

}  // namespace mhri
