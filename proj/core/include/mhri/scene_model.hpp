#pragma once

#include <optional>

#include "mhri/data.hpp"
#include "mhri/dist.hpp"
#include "mhri/model.hpp"

namespace mhri {

/// Turn-taking prior: how much mass stays on the previous speaker.
struct ScenePriorParams {
    double alpha_repeat = 0.1;

    void validate() const;
};

/// Next-speaker prior. Uniform with no history; otherwise alpha_repeat on
/// the previous speaker and the rest split evenly, which discourages
/// immediate self-continuation whenever alpha_repeat < 1/3.
Dist scene_prior(const std::optional<int>& previous_speaker, const ScenePriorParams& params);

/// One loss with its components kept for logging. When the KL term is
/// disabled (or its weight is zero) `total` is the CE tensor itself, so the
/// reduction is bit-identical to computing CE alone.
struct LossParts {
    Tensor total;
    Tensor ce;
    Tensor kl;  // zero constant when disabled
};

/// Composite scene loss: masked speaker cross-entropy plus masked mean
/// binary cross-entropy over the non-speaker listener bits, and optionally
/// lambda_s times the mean KL of each speaker distribution against the
/// turn-taking prior conditioned on the ground-truth previous speaker.
LossParts scene_loss(const ScenePrediction& pred, const Episode& episode, const MaskSet& masks,
                     const ScenePriorParams& priors, double lambda_s, bool kl_enabled = true);

}  // namespace mhri
