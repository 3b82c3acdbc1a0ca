#include "mhri/model.hpp"

#include <cmath>

#include "mhri/errors.hpp"

namespace mhri {

namespace {
constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;
constexpr int kSceneBlockWidth = 6;  // speaker probs (3) + listener probs (3)
}  // namespace

const char* coupling_name(SceneCoupling c) {
    switch (c) {
        case SceneCoupling::Soft: return "soft";
        case SceneCoupling::Detached: return "detached";
        case SceneCoupling::Hard: return "hard";
    }
    return "soft";
}

SceneCoupling coupling_from_name(const std::string& name) {
    if (name == "soft") return SceneCoupling::Soft;
    if (name == "detached") return SceneCoupling::Detached;
    if (name == "hard") return SceneCoupling::Hard;
    throw ConfigError("unknown scene coupling: '" + name + "'");
}

void ModelConfig::validate() const {
    if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || max_seq <= 0) {
        throw ConfigError("ModelConfig: sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("ModelConfig: d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (d_v <= 0 || d_t <= 0) throw ConfigError("ModelConfig: feature dims must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("ModelConfig: dropout must be in [0, 1)");
}

MhriModel::MhriModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    RngStream rng(derive_seed(config_.seed, 0x6d6f64656c /* "model" */));
    const int dm = config_.d_model;

    auto gauss = [&](const std::string& name, int rows, int cols) {
        params_.add(name, Tensor::randn({rows, cols}, kInitStd, rng));
    };
    auto zero_mat = [&](const std::string& name, int rows, int cols) {
        params_.add(name, Tensor::zeros({rows, cols}));
    };
    auto bias = [&](const std::string& name, int n) { params_.add(name, Tensor::zeros({n})); };
    auto ln = [&](const std::string& name, int n) {
        params_.add(name + ".gain", Tensor::full({n}, 1.0));
        params_.add(name + ".bias", Tensor::zeros({n}));
    };

    // Fusion block. Residual output projections start at zero so the stack
    // is the identity pathway at initialization.
    gauss("fuse.text_proj.w", config_.d_t, dm);
    bias("fuse.text_proj.b", dm);
    gauss("fuse.video_proj.w", config_.d_v, dm);
    bias("fuse.video_proj.b", dm);
    ln("fuse.ln_q", dm);
    ln("fuse.ln_kv", dm);
    gauss("fuse.attn.wq", dm, dm);
    bias("fuse.attn.bq", dm);
    gauss("fuse.attn.wk", dm, dm);
    bias("fuse.attn.bk", dm);
    gauss("fuse.attn.wv", dm, dm);
    bias("fuse.attn.bv", dm);
    gauss("fuse.attn.wo", dm, dm);
    bias("fuse.attn.bo", dm);
    gauss("fuse.out.w", 2 * dm, dm);
    bias("fuse.out.b", dm);

    params_.add("pos_emb", Tensor::randn({config_.max_seq, dm}, kInitStd, rng));

    for (int l = 0; l < config_.n_layers; ++l) {
        const std::string b = "block" + std::to_string(l);
        ln(b + ".ln1", dm);
        gauss(b + ".attn.wq", dm, dm);
        bias(b + ".attn.bq", dm);
        gauss(b + ".attn.wk", dm, dm);
        bias(b + ".attn.bk", dm);
        gauss(b + ".attn.wv", dm, dm);
        bias(b + ".attn.bv", dm);
        zero_mat(b + ".attn.wo", dm, dm);
        bias(b + ".attn.bo", dm);
        ln(b + ".ln2", dm);
        gauss(b + ".ffn.w1", dm, 4 * dm);
        bias(b + ".ffn.b1", 4 * dm);
        zero_mat(b + ".ffn.w2", 4 * dm, dm);
        bias(b + ".ffn.b2", dm);
    }

    // Normalizing the residual stream before the heads keeps their inputs at
    // unit scale whatever the stack's depth; shared by both heads.
    ln("heads.ln", dm);
    gauss("scene.speaker.w", dm, kNumParticipants);
    bias("scene.speaker.b", kNumParticipants);
    gauss("scene.listener.w", dm, kNumParticipants);
    bias("scene.listener.b", kNumParticipants);
    gauss("resp.head.w", dm + kSceneBlockWidth, 4);
    bias("resp.head.b", 4);
}

Tensor MhriModel::attn_block(const std::string& prefix, const Tensor& q_in, const Tensor& kv_in,
                             const std::vector<uint8_t>& valid, double self_bias,
                             AttentionTrace* trace) {
    Tensor q = add_bias(matmul(q_in, p(prefix + ".wq")), p(prefix + ".bq"));
    Tensor k = add_bias(matmul(kv_in, p(prefix + ".wk")), p(prefix + ".bk"));
    Tensor v = add_bias(matmul(kv_in, p(prefix + ".wv")), p(prefix + ".bv"));
    Tensor attn = causal_attention(q, k, v, config_.n_heads, valid, self_bias, trace);
    return add_bias(matmul(attn, p(prefix + ".wo")), p(prefix + ".bo"));
}

Tensor MhriModel::fuse(const Tensor& video_seq, const Tensor& text_seq,
                       const std::vector<uint8_t>& valid, bool training, RngStream* dropout_rng,
                       ForwardTrace* trace) {
    if (video_seq.ndim() != 2 || text_seq.ndim() != 2 || video_seq.dim(0) != text_seq.dim(0)) {
        throw ContractError("fuse: video and text sequences must be 2-D with equal lengths, got " +
                            video_seq.shape_str() + " and " + text_seq.shape_str());
    }
    if (video_seq.dim(1) != config_.d_v || text_seq.dim(1) != config_.d_t) {
        throw ContractError("fuse: feature widths do not match the model config");
    }

    Tensor t_proj = add_bias(matmul(text_seq, p("fuse.text_proj.w")), p("fuse.text_proj.b"));
    Tensor v_proj = add_bias(matmul(video_seq, p("fuse.video_proj.w")), p("fuse.video_proj.b"));

    Tensor q_in = layer_norm(t_proj, p("fuse.ln_q.gain"), p("fuse.ln_q.bias"), kLnEps);
    Tensor kv_in = layer_norm(v_proj, p("fuse.ln_kv.gain"), p("fuse.ln_kv.bias"), kLnEps);
    Tensor attn_out = attn_block("fuse.attn", q_in, kv_in, valid, config_.fuse_local_bias,
                                 trace ? &trace->fuse_attention : nullptr);
    if (training && dropout_rng) attn_out = dropout(attn_out, config_.dropout, true, *dropout_rng);
    Tensor x = add(t_proj, attn_out);

    return add_bias(matmul(concat_cols({x, t_proj}), p("fuse.out.w")), p("fuse.out.b"));
}

HiddenSeq MhriModel::backbone_forward(const Tensor& fused, const std::vector<uint8_t>& mask,
                                      bool training, RngStream* dropout_rng, ForwardTrace* trace) {
    const int n = fused.dim(0);
    if (n > config_.max_seq) {
        throw CapacityError("backbone_forward: sequence length " + std::to_string(n) +
                            " exceeds max_seq " + std::to_string(config_.max_seq));
    }
    if (static_cast<int>(mask.size()) != n) {
        throw ContractError("backbone_forward: mask length does not match sequence length");
    }
    if (trace) trace->block_attention.resize(static_cast<size_t>(config_.n_layers));

    Tensor h = add(fused, slice_rows(p("pos_emb"), 0, n));
    if (training && dropout_rng) h = dropout(h, config_.dropout, true, *dropout_rng);

    for (int l = 0; l < config_.n_layers; ++l) {
        const std::string b = "block" + std::to_string(l);
        Tensor a_in = layer_norm(h, p(b + ".ln1.gain"), p(b + ".ln1.bias"), kLnEps);
        Tensor a = attn_block(b + ".attn", a_in, a_in, mask, 0.0,
                              trace ? &trace->block_attention[static_cast<size_t>(l)] : nullptr);
        if (training && dropout_rng) a = dropout(a, config_.dropout, true, *dropout_rng);
        h = add(h, a);

        Tensor f_in = layer_norm(h, p(b + ".ln2.gain"), p(b + ".ln2.bias"), kLnEps);
        Tensor f = add_bias(
            matmul(gelu(add_bias(matmul(f_in, p(b + ".ffn.w1")), p(b + ".ffn.b1"))),
                   p(b + ".ffn.w2")),
            p(b + ".ffn.b2"));
        if (training && dropout_rng) f = dropout(f, config_.dropout, true, *dropout_rng);
        h = add(h, f);
    }
    return HiddenSeq{h, mask};
}

ScenePrediction MhriModel::predict_scene(const HiddenSeq& hidden) {
    Tensor h = layer_norm(hidden.values, p("heads.ln.gain"), p("heads.ln.bias"), kLnEps);
    ScenePrediction pred;
    pred.speaker_logits = add_bias(matmul(h, p("scene.speaker.w")), p("scene.speaker.b"));
    pred.speaker_probs = softmax(pred.speaker_logits, 1);
    pred.listener_logits = add_bias(matmul(h, p("scene.listener.w")), p("scene.listener.b"));
    pred.listener_probs = sigmoid(pred.listener_logits);
    return pred;
}

ResponsePrediction MhriModel::predict_response(const HiddenSeq& hidden,
                                               const ScenePrediction& scene, bool use_scene) {
    const int n = hidden.values.dim(0);
    Tensor scene_block;
    if (!use_scene) {
        scene_block = Tensor::zeros({n, kSceneBlockWidth});
    } else {
        switch (config_.coupling) {
            case SceneCoupling::Soft:
                scene_block = concat_cols({scene.speaker_probs, scene.listener_probs});
                break;
            case SceneCoupling::Detached:
                scene_block = concat_cols(
                    {scene.speaker_probs.detach(), scene.listener_probs.detach()});
                break;
            case SceneCoupling::Hard: {
                scene_block = Tensor::zeros({n, kSceneBlockWidth});
                for (int i = 0; i < n; ++i) {
                    const SceneReadout r = read_scene(scene, i);
                    scene_block.data()[static_cast<size_t>(i) * kSceneBlockWidth + r.speaker] = 1.0;
                    for (int c = 0; c < kNumParticipants; ++c) {
                        scene_block.data()[static_cast<size_t>(i) * kSceneBlockWidth + 3 + c] =
                            r.listeners[static_cast<size_t>(c)];
                    }
                }
                break;
            }
        }
    }
    if (scene_block.dim(0) != n) {
        throw ContractError("predict_response: scene prediction length mismatch");
    }
    Tensor h = layer_norm(hidden.values, p("heads.ln.gain"), p("heads.ln.bias"), kLnEps);
    ResponsePrediction pred;
    pred.logits = add_bias(matmul(concat_cols({h, scene_block}), p("resp.head.w")), p("resp.head.b"));
    pred.probs = softmax(pred.logits, 1);
    return pred;
}

SceneReadout read_scene(const ScenePrediction& pred, int row) {
    SceneReadout r{0, {0, 0, 0}};
    double best = pred.speaker_probs.at(row, 0);
    for (int c = 1; c < kNumParticipants; ++c) {
        if (pred.speaker_probs.at(row, c) > best) {
            best = pred.speaker_probs.at(row, c);
            r.speaker = c;
        }
    }
    int set_count = 0;
    double best_lp = -1.0;
    int best_listener = 0;
    for (int c = 0; c < kNumParticipants; ++c) {
        if (c == r.speaker) continue;  // the speaker cannot listen to itself
        const double lp = pred.listener_probs.at(row, c);
        if (lp > 0.5) {
            r.listeners[static_cast<size_t>(c)] = 1;
            ++set_count;
        }
        if (lp > best_lp) {
            best_lp = lp;
            best_listener = c;
        }
    }
    // Guarantee a non-empty listener set.
    if (set_count == 0) r.listeners[static_cast<size_t>(best_listener)] = 1;
    return r;
}

ResponseDecision read_response(const ResponsePrediction& pred, int row) {
    int best = 0;
    for (int c = 1; c < 4; ++c) {
        if (pred.probs.at(row, c) > pred.probs.at(row, best)) best = c;
    }
    return static_cast<ResponseDecision>(best);
}

std::pair<Tensor, Tensor> MhriModel::episode_inputs(const Episode& episode, int pad_to) {
    if (pad_to < episode.size()) {
        throw ContractError("episode_inputs: pad_to smaller than episode length");
    }
    Tensor video = Tensor::zeros({pad_to, episode.d_v});
    Tensor text = Tensor::zeros({pad_to, episode.d_t});
    for (int i = 0; i < episode.size(); ++i) {
        const UtteranceRecord& u = episode.utterances[static_cast<size_t>(i)];
        std::copy(u.video_feat.begin(), u.video_feat.end(),
                  video.data() + static_cast<size_t>(i) * episode.d_v);
        std::copy(u.text_feat.begin(), u.text_feat.end(),
                  text.data() + static_cast<size_t>(i) * episode.d_t);
    }
    return {std::move(video), std::move(text)};
}

EpisodeForward MhriModel::forward_episode(const Episode& episode, int pad_to, bool training,
                                          RngStream* dropout_rng, bool use_scene,
                                          ForwardTrace* trace) {
    if (episode.d_v != config_.d_v || episode.d_t != config_.d_t) {
        throw ContractError("forward_episode: episode feature dims (" + std::to_string(episode.d_v) +
                            ", " + std::to_string(episode.d_t) + ") do not match the model config");
    }
    auto [video, text] = episode_inputs(episode, pad_to);
    MaskSet masks = build_masks(episode, pad_to);

    EpisodeForward out;
    Tensor fused = fuse(video, text, masks.scene_mask, training, dropout_rng, trace);
    out.hidden = backbone_forward(fused, masks.scene_mask, training, dropout_rng, trace);
    out.scene = predict_scene(out.hidden);
    out.response = predict_response(out.hidden, out.scene, use_scene);
    return out;
}

}  // namespace mhri
