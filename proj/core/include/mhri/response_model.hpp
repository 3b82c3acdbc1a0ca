#pragma once

#include <optional>

#include "mhri/data.hpp"
#include "mhri/dist.hpp"
#include "mhri/model.hpp"
#include "mhri/scene_model.hpp"

namespace mhri {

/// Robot-address prior: favors answering whoever addresses the robot and
/// damps a second robot turn in a row.
struct ResponsePriorParams {
    double p_respond_addressed = 0.8;   // mass on answering the speaker when addressed
    double p_none_addressed = 0.1;      // mass on staying silent when addressed
    double p_none_unaddressed = 0.9;    // mass on staying silent otherwise
    double beta_self_turn = 0.5;        // respond-class multiplier after a robot turn

    void validate() const;
};

/// Prior over {None, RespondH1, RespondH2, RespondBoth} for one utterance,
/// built from the (ground-truth) scene label and the previous speaker.
Dist response_prior(const SceneLabel& scene, const std::optional<int>& previous_speaker,
                    const ResponsePriorParams& params);

/// Composite response loss: masked cross-entropy over the response mask
/// (padding and robot turns excluded), plus lambda_r times the masked mean
/// KL against the robot-address prior built from the ground-truth scene.
LossParts response_loss(const ResponsePrediction& pred, const Episode& episode,
                        const MaskSet& masks, const ResponsePriorParams& priors, double lambda_r,
                        bool kl_enabled = true);

}  // namespace mhri
