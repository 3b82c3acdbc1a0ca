#include "mhri/scene_model.hpp"

#include <string>

#include "mhri/errors.hpp"
#include "mhri/ops.hpp"

namespace mhri {

void ScenePriorParams::validate() const {
    if (!(alpha_repeat > 0.0 && alpha_repeat < 1.0)) {
        throw ConfigError("ScenePriorParams: alpha_repeat must lie in (0, 1), got " +
                          std::to_string(alpha_repeat));
    }
}

Dist scene_prior(const std::optional<int>& previous_speaker, const ScenePriorParams& params) {
    params.validate();
    if (!previous_speaker.has_value()) {
        return Dist({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
    }
    std::vector<double> p(kNumParticipants, (1.0 - params.alpha_repeat) / 2.0);
    p[static_cast<size_t>(*previous_speaker)] = params.alpha_repeat;
    return Dist(std::move(p));
}

LossParts scene_loss(const ScenePrediction& pred, const Episode& episode, const MaskSet& masks,
                     const ScenePriorParams& priors, double lambda_s, bool kl_enabled) {
    if (lambda_s < 0.0) throw ConfigError("scene_loss: lambda_s must be >= 0");
    const int n_pad = pred.speaker_logits.dim(0);
    if (static_cast<int>(masks.scene_mask.size()) != n_pad || episode.size() > n_pad) {
        throw ContractError("scene_loss: mask/prediction/episode lengths disagree");
    }

    std::vector<int> speaker_targets(static_cast<size_t>(n_pad), 0);
    std::vector<double> listener_targets(static_cast<size_t>(n_pad) * kNumParticipants, 0.0);
    std::vector<uint8_t> listener_pair_mask(static_cast<size_t>(n_pad) * kNumParticipants, 0);
    for (int i = 0; i < episode.size(); ++i) {
        const SceneLabel& s = episode.utterances[static_cast<size_t>(i)].scene;
        speaker_targets[static_cast<size_t>(i)] = s.speaker;
        for (int c = 0; c < kNumParticipants; ++c) {
            const size_t idx = static_cast<size_t>(i) * kNumParticipants + c;
            listener_targets[idx] = s.listeners[static_cast<size_t>(c)];
            // The speaker's own bit is structurally zero; it carries no signal.
            listener_pair_mask[idx] = masks.scene_mask[static_cast<size_t>(i)] && c != s.speaker;
        }
    }

    LossParts parts;
    parts.ce = add(masked_cross_entropy(pred.speaker_logits, speaker_targets, masks.scene_mask),
                   masked_bce_with_logits(pred.listener_logits, listener_targets,
                                          listener_pair_mask));

    if (!kl_enabled) {
        parts.kl = Tensor::scalar(0.0);
        parts.total = parts.ce;
        return parts;
    }

    // Teacher-forced priors: position n is compared against the prior given
    // the ground-truth speaker at n-1 (uniform at the episode start).
    std::vector<double> prior_rows(static_cast<size_t>(n_pad) * kNumParticipants, 1.0 / 3.0);
    for (int i = 0; i < episode.size(); ++i) {
        std::optional<int> prev;
        if (i > 0) prev = episode.utterances[static_cast<size_t>(i - 1)].scene.speaker;
        const Dist d = scene_prior(prev, priors);
        for (int c = 0; c < kNumParticipants; ++c) {
            prior_rows[static_cast<size_t>(i) * kNumParticipants + c] = d[static_cast<size_t>(c)];
        }
    }
    parts.kl = kl_to_prior_rows(pred.speaker_probs, prior_rows, masks.scene_mask);
    parts.total = lambda_s == 0.0 ? parts.ce : add(parts.ce, mul_scalar(parts.kl, lambda_s));
    return parts;
}

}  // namespace mhri
