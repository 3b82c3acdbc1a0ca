#include "mhri/response_model.hpp"

#include <string>

#include "mhri/errors.hpp"
#include "mhri/ops.hpp"

namespace mhri {

namespace {
constexpr int kNumDecisions = 4;

void check_open_unit(double p, const char* name) {
    if (!(p > 0.0 && p < 1.0)) {
        throw ConfigError(std::string("ResponsePriorParams: ") + name + " must lie in (0, 1)");
    }
}
}  // namespace

void ResponsePriorParams::validate() const {
    check_open_unit(p_respond_addressed, "p_respond_addressed");
    check_open_unit(p_none_addressed, "p_none_addressed");
    check_open_unit(p_none_unaddressed, "p_none_unaddressed");
    check_open_unit(beta_self_turn, "beta_self_turn");
    if (p_respond_addressed + p_none_addressed > 1.0) {
        throw ConfigError(
            "ResponsePriorParams: p_respond_addressed + p_none_addressed must not exceed 1");
    }
}

Dist response_prior(const SceneLabel& scene, const std::optional<int>& previous_speaker,
                    const ResponsePriorParams& params) {
    params.validate();
    std::vector<double> p(kNumDecisions, 0.0);
    if (scene.robot_addressed() && scene.speaker != kParticipantRobot) {
        const int speaker_class = scene.speaker == kParticipantH1
                                      ? static_cast<int>(ResponseDecision::RespondH1)
                                      : static_cast<int>(ResponseDecision::RespondH2);
        const double rest = (1.0 - params.p_none_addressed - params.p_respond_addressed) / 2.0;
        p[0] = params.p_none_addressed;
        for (int c = 1; c < kNumDecisions; ++c) p[static_cast<size_t>(c)] = rest;
        p[static_cast<size_t>(speaker_class)] = params.p_respond_addressed;
    } else {
        p[0] = params.p_none_unaddressed;
        const double rest = (1.0 - params.p_none_unaddressed) / 3.0;
        for (int c = 1; c < kNumDecisions; ++c) p[static_cast<size_t>(c)] = rest;
    }
    if (previous_speaker.has_value() && *previous_speaker == kParticipantRobot) {
        for (int c = 1; c < kNumDecisions; ++c) p[static_cast<size_t>(c)] *= params.beta_self_turn;
        double total = 0.0;
        for (double x : p) total += x;
        for (double& x : p) x /= total;
    }
    return Dist(std::move(p));
}

LossParts response_loss(const ResponsePrediction& pred, const Episode& episode,
                        const MaskSet& masks, const ResponsePriorParams& priors, double lambda_r,
                        bool kl_enabled) {
    if (lambda_r < 0.0) throw ConfigError("response_loss: lambda_r must be >= 0");
    const int n_pad = pred.logits.dim(0);
    if (static_cast<int>(masks.response_mask.size()) != n_pad || episode.size() > n_pad) {
        throw ContractError("response_loss: mask/prediction/episode lengths disagree");
    }

    std::vector<int> targets(static_cast<size_t>(n_pad), 0);
    for (int i = 0; i < episode.size(); ++i) {
        targets[static_cast<size_t>(i)] =
            static_cast<int>(episode.utterances[static_cast<size_t>(i)].response);
    }

    LossParts parts;
    parts.ce = masked_cross_entropy(pred.logits, targets, masks.response_mask);

    if (!kl_enabled) {
        parts.kl = Tensor::scalar(0.0);
        parts.total = parts.ce;
        return parts;
    }

    // Priors are built from the ground-truth scene (stable targets) even
    // though the head itself consumes predicted scene outputs.
    std::vector<double> prior_rows(static_cast<size_t>(n_pad) * kNumDecisions, 0.25);
    for (int i = 0; i < episode.size(); ++i) {
        if (!masks.response_mask[static_cast<size_t>(i)]) continue;
        std::optional<int> prev;
        if (i > 0) prev = episode.utterances[static_cast<size_t>(i - 1)].scene.speaker;
        const Dist d =
            response_prior(episode.utterances[static_cast<size_t>(i)].scene, prev, priors);
        for (int c = 0; c < kNumDecisions; ++c) {
            prior_rows[static_cast<size_t>(i) * kNumDecisions + c] = d[static_cast<size_t>(c)];
        }
    }
    parts.kl = kl_to_prior_rows(pred.probs, prior_rows, masks.response_mask);
    parts.total = lambda_r == 0.0 ? parts.ce : add(parts.ce, mul_scalar(parts.kl, lambda_r));
    return parts;
}

}  // namespace mhri
