#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mhri/errors.hpp"
#include "mhri/grad_check.hpp"
#include "mhri/ops.hpp"
#include "mhri/response_model.hpp"
#include "mhri/scene_model.hpp"
#include "mhri/synth.hpp"

using namespace mhri;

namespace {

// Reference KL by direct summation, independent of the library op.
double kl_ref(const std::vector<double>& p, const std::vector<double>& q) {
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) acc += p[i] * std::log(p[i] / q[i]);
    }
    return acc;
}

UtteranceRecord utt(int index, int speaker, std::array<uint8_t, 3> listeners,
                    std::optional<int> gaze, ResponseDecision response) {
    UtteranceRecord u;
    u.index = index;
    u.video_feat.assign(8, 0.0);
    u.text_feat.assign(8, 0.0);
    u.scene.speaker = speaker;
    u.scene.listeners = listeners;
    u.gaze.target = gaze;
    u.gaze.category = categorize_alignment(gaze, listeners);
    u.response = response;
    u.start_s = index;
    u.end_s = index + 0.5;
    return u;
}

Episode two_turn_episode() {
    Episode e;
    e.episode_id = "two";
    e.d_v = 8;
    e.d_t = 8;
    e.utterances.push_back(utt(0, kParticipantH1, {0, 0, 1}, 2, ResponseDecision::RespondH1));
    e.utterances.push_back(utt(1, kParticipantH2, {1, 0, 0}, 0, ResponseDecision::None));
    e.validate();
    return e;
}

ScenePrediction scene_pred_from_logits(Tensor speaker_logits, Tensor listener_logits) {
    ScenePrediction pred;
    pred.speaker_logits = std::move(speaker_logits);
    pred.speaker_probs = softmax(pred.speaker_logits, 1);
    pred.listener_logits = std::move(listener_logits);
    pred.listener_probs = sigmoid(pred.listener_logits);
    return pred;
}

ResponsePrediction response_pred_from_logits(Tensor logits) {
    ResponsePrediction pred;
    pred.logits = std::move(logits);
    pred.probs = softmax(pred.logits, 1);
    return pred;
}

}  // namespace

TEST_CASE("scene_prior: no history, repeat damping, degenerate alpha") {
    ScenePriorParams params;
    const Dist uniform = scene_prior(std::nullopt, params);
    for (int c = 0; c < 3; ++c) CHECK(uniform[c] == doctest::Approx(1.0 / 3.0));

    const Dist after_h1 = scene_prior(kParticipantH1, params);
    CHECK(after_h1[0] == doctest::Approx(0.1));
    CHECK(after_h1[1] == doctest::Approx(0.45));
    CHECK(after_h1[2] == doctest::Approx(0.45));

    ScenePriorParams third;
    third.alpha_repeat = 1.0 / 3.0;
    const Dist flat = scene_prior(kParticipantH2, third);
    for (int c = 0; c < 3; ++c) CHECK(flat[c] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("scene_prior: valid distribution across the parameter range") {
    for (double alpha : {0.01, 0.1, 0.3, 1.0 / 3.0, 0.5, 0.9, 0.99}) {
        ScenePriorParams params;
        params.alpha_repeat = alpha;
        for (int prev = 0; prev < 3; ++prev) {
            const Dist d = scene_prior(prev, params);
            double total = 0.0;
            for (int c = 0; c < 3; ++c) total += d[c];
            CHECK(std::abs(total - 1.0) < 1e-9);
        }
    }
    ScenePriorParams bad;
    bad.alpha_repeat = 0.0;
    CHECK_THROWS_AS(scene_prior(std::nullopt, bad), ConfigError);
}

TEST_CASE("scene_loss: perfect one-hot predictions give near-zero CE") {
    const Episode e = two_turn_episode();
    const MaskSet masks = build_masks(e, 2);

    // Extreme logits make softmax/logistic outputs one-hot to double precision.
    Tensor speaker_logits = Tensor::from_data({2, 3}, {50, -50, -50, -50, 50, -50});
    Tensor listener_logits = Tensor::from_data({2, 3}, {-50, -50, 50, 50, -50, -50});
    ScenePrediction pred = scene_pred_from_logits(speaker_logits, listener_logits);
    const LossParts parts = scene_loss(pred, e, masks, ScenePriorParams{}, 0.0);
    CHECK(parts.ce.value() == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(std::abs(parts.ce.value()) < 1e-6);
}

TEST_CASE("scene_loss: uniform prediction KL against teacher-forced priors") {
    const Episode e = two_turn_episode();
    const MaskSet masks = build_masks(e, 2);
    const double third = 1.0 / 3.0;
    Tensor speaker_logits = Tensor::zeros({2, 3});  // softmax rows = uniform
    Tensor listener_logits = Tensor::zeros({2, 3});
    ScenePrediction pred = scene_pred_from_logits(speaker_logits, listener_logits);

    ScenePriorParams params;  // alpha 0.1
    const LossParts parts = scene_loss(pred, e, masks, params, 1.0);

    // Row 0: uniform against uniform prior -> 0. Row 1: uniform against
    // [0.1, 0.45, 0.45]; frozen from the direct-summation reference.
    const double row1 = kl_ref({third, third, third}, {0.1, 0.45, 0.45});
    CHECK(row1 == doctest::Approx(0.2012545103));
    CHECK(parts.kl.value() == doctest::Approx(row1 / 2.0).epsilon(1e-9));
}

TEST_CASE("scene_loss: KL term is zero when every prediction equals its prior") {
    const Episode e = two_turn_episode();
    const MaskSet masks = build_masks(e, 2);
    ScenePriorParams params;

    // Build prediction rows bitwise equal to the teacher-forced priors.
    std::vector<double> rows;
    const Dist p0 = scene_prior(std::nullopt, params);
    const Dist p1 = scene_prior(e.utterances[0].scene.speaker, params);
    for (int c = 0; c < 3; ++c) rows.push_back(p0[c]);
    for (int c = 0; c < 3; ++c) rows.push_back(p1[c]);

    ScenePrediction pred;
    pred.speaker_probs = Tensor::from_data({2, 3}, rows);
    pred.speaker_logits = Tensor::zeros({2, 3});
    pred.listener_logits = Tensor::zeros({2, 3});
    pred.listener_probs = sigmoid(pred.listener_logits);

    const LossParts parts = scene_loss(pred, e, masks, params, 1.0);
    CHECK(parts.kl.value() == 0.0);
}

TEST_CASE("scene_loss: lambda 0 and disabled KL are bitwise pure CE") {
    const Episode e = two_turn_episode();
    const MaskSet masks = build_masks(e, 2);
    RngStream rng(3);
    Tensor speaker_logits = Tensor::randn({2, 3}, 1.0, rng);
    Tensor listener_logits = Tensor::randn({2, 3}, 1.0, rng);

    ScenePrediction pred = scene_pred_from_logits(speaker_logits.detach(), listener_logits.detach());
    const LossParts lam0 = scene_loss(pred, e, masks, ScenePriorParams{}, 0.0, true);
    const LossParts off = scene_loss(pred, e, masks, ScenePriorParams{}, 0.01, false);
    const LossParts on = scene_loss(pred, e, masks, ScenePriorParams{}, 0.01, true);

    CHECK(lam0.total.value() == lam0.ce.value());
    CHECK(off.total.value() == off.ce.value());
    CHECK(off.kl.value() == 0.0);
    CHECK(lam0.total.value() == off.total.value());
    CHECK(on.total.value() != off.total.value());
}

TEST_CASE("scene_loss: true one-hot rows never increase the CE") {
    const Episode e = two_turn_episode();
    const MaskSet masks = build_masks(e, 2);
    RngStream rng(5);
    for (int it = 0; it < 25; ++it) {
        Tensor speaker_logits = Tensor::randn({2, 3}, 2.0, rng);
        Tensor listener_logits = Tensor::randn({2, 3}, 2.0, rng);
        const LossParts base = scene_loss(scene_pred_from_logits(speaker_logits, listener_logits),
                                          e, masks, ScenePriorParams{}, 0.0);
        for (int row = 0; row < 2; ++row) {
            Tensor better = speaker_logits.detach();
            for (int c = 0; c < 3; ++c) {
                better.data()[static_cast<size_t>(row) * 3 + c] =
                    c == e.utterances[static_cast<size_t>(row)].scene.speaker ? 60.0 : -60.0;
            }
            const LossParts improved = scene_loss(scene_pred_from_logits(better, listener_logits),
                                                  e, masks, ScenePriorParams{}, 0.0);
            CHECK(improved.ce.value() <= base.ce.value() + 1e-12);
        }
    }
}

TEST_CASE("scene_loss: gradient passes the finite-difference check") {
    const Episode e = two_turn_episode();
    const MaskSet masks = build_masks(e, 2);
    RngStream rng(7);
    const double err = grad_check(
        [&](std::vector<Tensor>& xs) {
            ScenePrediction pred = scene_pred_from_logits(xs[0], xs[1]);
            return scene_loss(pred, e, masks, ScenePriorParams{}, 0.01).total;
        },
        {Tensor::randn({2, 3}, 1.0, rng), Tensor::randn({2, 3}, 1.0, rng)});
    CHECK(err < 1e-4);
}

TEST_CASE("response_prior: addressed, damped, unaddressed") {
    ResponsePriorParams params;
    SceneLabel addressed;
    addressed.speaker = kParticipantH1;
    addressed.listeners = {0, 0, 1};

    const Dist base = response_prior(addressed, std::nullopt, params);
    CHECK(base[0] == doctest::Approx(0.10));
    CHECK(base[1] == doctest::Approx(0.80));
    CHECK(base[2] == doctest::Approx(0.05));
    CHECK(base[3] == doctest::Approx(0.05));

    const Dist damped = response_prior(addressed, kParticipantRobot, params);
    CHECK(damped[0] == doctest::Approx(0.18182).epsilon(1e-4));
    CHECK(damped[1] == doctest::Approx(0.72727).epsilon(1e-4));
    CHECK(damped[2] == doctest::Approx(0.04545).epsilon(1e-4));
    CHECK(damped[3] == doctest::Approx(0.04545).epsilon(1e-4));

    SceneLabel unaddressed;
    unaddressed.speaker = kParticipantH1;
    unaddressed.listeners = {0, 1, 0};
    const Dist quiet = response_prior(unaddressed, std::nullopt, params);
    CHECK(quiet[0] == doctest::Approx(0.9));
    for (int c = 1; c < 4; ++c) CHECK(quiet[c] == doctest::Approx(0.1 / 3.0));
}

TEST_CASE("response_prior: valid distribution across a parameter sweep") {
    for (double pr : {0.5, 0.7, 0.8, 0.9}) {
        for (double pn : {0.02, 0.1, 0.15}) {
            for (double pu : {0.5, 0.9, 0.97}) {
                for (double beta : {0.1, 0.5, 0.9}) {
                    if (pr + pn > 1.0) continue;
                    ResponsePriorParams params;
                    params.p_respond_addressed = pr;
                    params.p_none_addressed = pn;
                    params.p_none_unaddressed = pu;
                    params.beta_self_turn = beta;
                    for (int speaker : {kParticipantH1, kParticipantH2}) {
                        for (int listeners = 1; listeners < 8; ++listeners) {
                            SceneLabel s;
                            s.speaker = speaker;
                            s.listeners = {static_cast<uint8_t>(listeners & 1),
                                           static_cast<uint8_t>((listeners >> 1) & 1),
                                           static_cast<uint8_t>((listeners >> 2) & 1)};
                            if (s.listeners[static_cast<size_t>(speaker)]) continue;
                            if (s.listener_count() == 0) continue;
                            for (std::optional<int> prev :
                                 {std::optional<int>{}, std::optional<int>{0},
                                  std::optional<int>{2}}) {
                                const Dist d = response_prior(s, prev, params);
                                double total = 0.0;
                                for (size_t c = 0; c < 4; ++c) total += d[c];
                                CHECK(std::abs(total - 1.0) < 1e-9);
                            }
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("response_loss: prediction equal to the prior gives exactly zero KL") {
    const Episode e = two_turn_episode();
    const MaskSet masks = build_masks(e, 2);
    ResponsePriorParams params;

    std::vector<double> rows;
    const Dist p0 = response_prior(e.utterances[0].scene, std::nullopt, params);
    const Dist p1 = response_prior(e.utterances[1].scene, e.utterances[0].scene.speaker, params);
    for (size_t c = 0; c < 4; ++c) rows.push_back(p0[c]);
    for (size_t c = 0; c < 4; ++c) rows.push_back(p1[c]);

    ResponsePrediction pred;
    pred.probs = Tensor::from_data({2, 4}, rows);
    pred.logits = Tensor::zeros({2, 4});
    const LossParts parts = response_loss(pred, e, masks, params, 1.0);
    CHECK(parts.kl.value() == 0.0);
}

TEST_CASE("response_loss: one-hot correct predictions, lambda 0, near-zero loss") {
    const Episode e = two_turn_episode();
    const MaskSet masks = build_masks(e, 2);
    Tensor logits = Tensor::zeros({2, 4});
    for (int i = 0; i < 2; ++i) {
        const int truth = static_cast<int>(e.utterances[static_cast<size_t>(i)].response);
        for (int c = 0; c < 4; ++c) {
            logits.data()[static_cast<size_t>(i) * 4 + c] = c == truth ? 60.0 : -60.0;
        }
    }
    const LossParts parts = response_loss(response_pred_from_logits(logits), e, masks,
                                          ResponsePriorParams{}, 0.0);
    CHECK(std::abs(parts.total.value()) < 1e-6);
}

TEST_CASE("response_loss: uniform prediction against the addressed prior, frozen value") {
    Episode e;
    e.episode_id = "single";
    e.d_v = 8;
    e.d_t = 8;
    e.utterances.push_back(utt(0, kParticipantH1, {0, 0, 1}, 2, ResponseDecision::RespondH1));
    e.validate();
    const MaskSet masks = build_masks(e, 1);

    ResponsePrediction pred = response_pred_from_logits(Tensor::zeros({1, 4}));
    const LossParts parts = response_loss(pred, e, masks, ResponsePriorParams{}, 1.0);

    // 0.25 (ln 2.5 + ln 0.3125 + ln 5 + ln 5) by direct summation.
    const double expected = kl_ref({0.25, 0.25, 0.25, 0.25}, {0.1, 0.8, 0.05, 0.05});
    CHECK(expected == doctest::Approx(0.7430039465));
    CHECK(parts.kl.value() == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("response_loss: robot positions contribute zero value and gradient") {
    Episode e;
    e.episode_id = "robot-mid";
    e.d_v = 8;
    e.d_t = 8;
    e.utterances.push_back(utt(0, kParticipantH1, {0, 0, 1}, 2, ResponseDecision::RespondH1));
    e.utterances.push_back(utt(1, kParticipantRobot, {1, 0, 0}, 0, ResponseDecision::None));
    e.utterances.push_back(utt(2, kParticipantH2, {1, 0, 0}, 0, ResponseDecision::None));
    e.validate();
    const MaskSet masks = build_masks(e, 3);

    RngStream rng(11);
    Tensor logits_a = Tensor::randn({3, 4}, 1.0, rng, true);
    Tensor logits_b = logits_a.detach();
    logits_b.node()->requires_grad = true;
    for (int c = 0; c < 4; ++c) logits_b.data()[4 + c] += 100.0;  // robot row only

    LossParts a = response_loss(response_pred_from_logits(logits_a), e, masks,
                                ResponsePriorParams{}, 0.01);
    LossParts b = response_loss(response_pred_from_logits(logits_b), e, masks,
                                ResponsePriorParams{}, 0.01);
    CHECK(a.total.value() == b.total.value());

    a.total.backward();
    b.total.backward();
    for (int c = 0; c < 4; ++c) {
        CHECK(logits_a.grad()[4 + c] == 0.0);
        CHECK(logits_b.grad()[4 + c] == 0.0);
    }
}

TEST_CASE("response_loss: KL is uniquely minimized at the prior") {
    Episode e;
    e.episode_id = "min";
    e.d_v = 8;
    e.d_t = 8;
    e.utterances.push_back(utt(0, kParticipantH1, {0, 0, 1}, 2, ResponseDecision::RespondH1));
    e.validate();
    const MaskSet masks = build_masks(e, 1);
    ResponsePriorParams params;
    const Dist prior = response_prior(e.utterances[0].scene, std::nullopt, params);

    ResponsePrediction at_prior;
    at_prior.probs = Tensor::from_data({1, 4}, prior.probs());
    at_prior.logits = Tensor::zeros({1, 4});
    CHECK(response_loss(at_prior, e, masks, params, 1.0).kl.value() == 0.0);

    RngStream rng(13);
    for (int it = 0; it < 30; ++it) {
        std::vector<double> p = prior.probs();
        // Random perturbation on the simplex.
        const int up = rng.uniform_int(0, 3);
        const int down = (up + 1 + rng.uniform_int(0, 2)) % 4;
        const double eps = 0.01 + 0.02 * rng.uniform();
        p[static_cast<size_t>(up)] += eps;
        p[static_cast<size_t>(down)] -= eps;
        if (p[static_cast<size_t>(down)] <= 0.0) continue;
        ResponsePrediction moved;
        moved.probs = Tensor::from_data({1, 4}, p);
        moved.logits = Tensor::zeros({1, 4});
        CHECK(response_loss(moved, e, masks, params, 1.0).kl.value() > 0.0);
    }
}

TEST_CASE("response_loss: gradient passes the finite-difference check") {
    const Episode e = two_turn_episode();
    const MaskSet masks = build_masks(e, 2);
    RngStream rng(17);
    const double err = grad_check(
        [&](std::vector<Tensor>& xs) {
            return response_loss(response_pred_from_logits(xs[0]), e, masks,
                                 ResponsePriorParams{}, 0.01)
                .total;
        },
        {Tensor::randn({2, 4}, 1.0, rng)});
    CHECK(err < 1e-4);
}

TEST_CASE("readout: positive scaling of all logits never changes the argmax decision") {
    RngStream rng(19);
    for (int it = 0; it < 50; ++it) {
        Tensor logits = Tensor::randn({1, 4}, 2.0, rng);
        ResponsePrediction base = response_pred_from_logits(logits);
        const ResponseDecision d0 = read_response(base, 0);
        for (double scale : {0.25, 2.0, 17.0}) {
            Tensor scaled = Tensor::from_data({1, 4}, logits.data_vec());
            for (double& v : scaled.data_vec()) v *= scale;
            ResponsePrediction moved = response_pred_from_logits(scaled);
            CHECK(read_response(moved, 0) == d0);
        }
    }
}
