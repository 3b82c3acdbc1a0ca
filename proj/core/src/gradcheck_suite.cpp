#include "mhri/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mhri/grad_check.hpp"
#include "mhri/model.hpp"
#include "mhri/ops.hpp"
#include "mhri/response_model.hpp"
#include "mhri/scene_model.hpp"
#include "mhri/synth.hpp"
#include "mhri/trainer.hpp"

namespace mhri {

namespace {

constexpr double kTolElementwise = 1e-5;
constexpr double kTolOp = 1e-5;
constexpr double kTolJoint = 1e-4;

uint64_t fnv1a(const char* s) {
    uint64_t h = 1469598103934665603ULL;
    for (; *s; ++s) h = (h ^ static_cast<uint64_t>(*s)) * 1099511628211ULL;
    return h;
}

// Coordinate-wise minimum over three step widths; see grad_check_errors.
double robust_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                    std::vector<Tensor> inputs) {
    static constexpr double kSteps[] = {1e-5, 2e-4, 1e-3};
    std::vector<double> best;
    for (double h : kSteps) {
        const std::vector<double> errs = grad_check_errors(f, inputs, h);
        if (best.empty()) {
            best = errs;
        } else {
            for (size_t i = 0; i < errs.size(); ++i) best[i] = std::min(best[i], errs[i]);
        }
    }
    double worst = 0.0;
    for (double e : best) worst = std::max(worst, e);
    return worst;
}

std::vector<double> random_dist(int n, RngStream& rng) {
    std::vector<double> p(static_cast<size_t>(n));
    double total = 0.0;
    for (double& x : p) {
        x = 0.1 + rng.uniform();
        total += x;
    }
    for (double& x : p) x /= total;
    return p;
}

void randomize_params(MhriModel& model, RngStream& rng, double stddev) {
    for (auto& [name, t] : model.params().params()) {
        rng.fill_normal(t.data(), static_cast<size_t>(t.numel()), stddev);
    }
}

using CaseFn = double (*)(RngStream&);

double case_matmul(RngStream& rng) {
    const int m = rng.uniform_int(1, 4), k = rng.uniform_int(1, 4), n = rng.uniform_int(1, 4);
    Tensor a = Tensor::randn({m, k}, 1.0, rng);
    Tensor b = Tensor::randn({k, n}, 1.0, rng);
    Tensor c = Tensor::randn({m, n}, 1.0, rng);
    return robust_check(
        [&](std::vector<Tensor>& xs) { return sum(mul(matmul(xs[0], xs[1]), c)); }, {a, b});
}

double case_softmax(RngStream& rng) {
    const int n = rng.uniform_int(1, 4), c = rng.uniform_int(2, 5);
    const int axis = rng.bernoulli(0.5) ? 1 : 0;
    Tensor x = Tensor::randn({n, c}, 2.0, rng);
    Tensor w = Tensor::randn({n, c}, 1.0, rng);
    return robust_check(
        [&](std::vector<Tensor>& xs) { return sum(mul(softmax(xs[0], axis), w)); }, {x});
}

double case_layer_norm(RngStream& rng) {
    const int n = rng.uniform_int(1, 3), d = rng.uniform_int(2, 6);
    Tensor x = Tensor::randn({n, d}, 1.5, rng);
    Tensor gain = Tensor::randn({d}, 0.5, rng);
    Tensor bias = Tensor::randn({d}, 0.5, rng);
    Tensor w = Tensor::randn({n, d}, 1.0, rng);
    return robust_check(
        [&](std::vector<Tensor>& xs) {
            return sum(mul(layer_norm(xs[0], xs[1], xs[2], 1e-5), w));
        },
        {x, gain, bias});
}

double case_sigmoid(RngStream& rng) {
    const int n = rng.uniform_int(1, 4), c = rng.uniform_int(1, 5);
    Tensor x = Tensor::randn({n, c}, 2.0, rng);
    Tensor w = Tensor::randn({n, c}, 1.0, rng);
    return robust_check([&](std::vector<Tensor>& xs) { return sum(mul(sigmoid(xs[0]), w)); },
                        {x});
}

double case_gelu(RngStream& rng) {
    const int n = rng.uniform_int(1, 4), c = rng.uniform_int(1, 5);
    Tensor x = Tensor::randn({n, c}, 1.5, rng);
    Tensor w = Tensor::randn({n, c}, 1.0, rng);
    return robust_check([&](std::vector<Tensor>& xs) { return sum(mul(gelu(xs[0]), w)); }, {x});
}

double case_masked_ce(RngStream& rng) {
    const int n = rng.uniform_int(1, 5), c = rng.uniform_int(2, 5);
    Tensor logits = Tensor::randn({n, c}, 2.0, rng);
    std::vector<int> targets(static_cast<size_t>(n));
    std::vector<uint8_t> mask(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        targets[static_cast<size_t>(i)] = rng.uniform_int(0, c - 1);
        mask[static_cast<size_t>(i)] = rng.bernoulli(0.7) ? 1 : 0;
    }
    mask[static_cast<size_t>(rng.uniform_int(0, n - 1))] = 1;
    return robust_check(
        [&](std::vector<Tensor>& xs) { return masked_cross_entropy(xs[0], targets, mask); },
        {logits});
}

double case_masked_bce(RngStream& rng) {
    const int n = rng.uniform_int(1, 4), c = rng.uniform_int(2, 4);
    Tensor logits = Tensor::randn({n, c}, 2.0, rng);
    std::vector<double> targets(static_cast<size_t>(n * c));
    std::vector<uint8_t> mask(static_cast<size_t>(n * c));
    for (size_t i = 0; i < targets.size(); ++i) {
        targets[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        mask[i] = rng.bernoulli(0.6) ? 1 : 0;
    }
    mask[rng.next_u64() % mask.size()] = 1;
    return robust_check(
        [&](std::vector<Tensor>& xs) { return masked_bce_with_logits(xs[0], targets, mask); },
        {logits});
}

double case_kl(RngStream& rng) {
    const int c = rng.uniform_int(2, 6);
    Dist q(random_dist(c, rng));
    Tensor p = Tensor::from_data({c}, random_dist(c, rng));
    return robust_check([&](std::vector<Tensor>& xs) { return kl_divergence(xs[0], q); }, {p});
}

double case_kl_rows(RngStream& rng) {
    const int n = rng.uniform_int(1, 4), c = rng.uniform_int(2, 5);
    std::vector<double> probs, priors;
    for (int i = 0; i < n; ++i) {
        for (double x : random_dist(c, rng)) probs.push_back(x);
        for (double x : random_dist(c, rng)) priors.push_back(x);
    }
    std::vector<uint8_t> mask(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) mask[static_cast<size_t>(i)] = rng.bernoulli(0.7) ? 1 : 0;
    mask[static_cast<size_t>(rng.uniform_int(0, n - 1))] = 1;
    Tensor p = Tensor::from_data({n, c}, probs);
    return robust_check(
        [&](std::vector<Tensor>& xs) { return kl_to_prior_rows(xs[0], priors, mask); }, {p});
}

double case_attention(RngStream& rng) {
    const int heads = rng.uniform_int(1, 2);
    const int d = heads * rng.uniform_int(2, 3);
    const int n = rng.uniform_int(1, 5);
    Tensor q = Tensor::randn({n, d}, 1.0, rng);
    Tensor k = Tensor::randn({n, d}, 1.0, rng);
    Tensor v = Tensor::randn({n, d}, 1.0, rng);
    Tensor w = Tensor::randn({n, d}, 1.0, rng);
    const int real = rng.uniform_int(1, n);
    std::vector<uint8_t> valid(static_cast<size_t>(n), 0);
    for (int i = 0; i < real; ++i) valid[static_cast<size_t>(i)] = 1;
    return robust_check(
        [&](std::vector<Tensor>& xs) {
            return sum(mul(causal_attention(xs[0], xs[1], xs[2], heads, valid), w));
        },
        {q, k, v});
}

double case_fuse(RngStream& rng) {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.d_v = 8;
    cfg.d_t = 8;
    cfg.max_seq = 6;
    cfg.dropout = 0.0;
    cfg.seed = rng.next_u64();
    MhriModel model(cfg);
    randomize_params(model, rng, 0.3);

    const int n = rng.uniform_int(1, 4);
    std::vector<uint8_t> valid(static_cast<size_t>(n), 1);
    Tensor video = Tensor::randn({n, cfg.d_v}, 1.0, rng);
    Tensor text = Tensor::randn({n, cfg.d_t}, 1.0, rng);
    Tensor w = Tensor::randn({n, cfg.d_model}, 1.0, rng);
    return robust_check(
        [&](std::vector<Tensor>& xs) { return sum(mul(model.fuse(xs[0], xs[1], valid), w)); },
        {video, text});
}

double case_joint_loss(RngStream& rng) {
    ModelConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.d_v = 8;
    cfg.d_t = 8;
    cfg.max_seq = 4;
    cfg.dropout = 0.0;
    cfg.seed = rng.next_u64();
    MhriModel model(cfg);
    randomize_params(model, rng, 0.3);

    SynthConfig synth;
    synth.n_episodes = 1;
    synth.min_utterances = 2;
    synth.max_utterances = 2;
    synth.d_v = 8;
    synth.d_t = 8;
    synth.noise_sigma = 0.2;
    synth.seed = rng.next_u64();
    const Episode episode = generate_dataset(synth)[0];
    const int pad_to = 3;  // one padded position exercises the masking path
    const MaskSet masks = build_masks(episode, pad_to);

    ScenePriorParams scene_priors;
    ResponsePriorParams response_priors;
    AblationFlags flags;

    std::vector<Tensor> inputs;
    for (auto& [name, t] : model.params().params()) inputs.push_back(t);

    auto f = [&](std::vector<Tensor>&) -> Tensor {
        EpisodeForward fwd = model.forward_episode(episode, pad_to, false, nullptr, true);
        LossParts scene = scene_loss(fwd.scene, episode, masks, scene_priors, 0.01, flags.kl_s);
        LossParts resp =
            response_loss(fwd.response, episode, masks, response_priors, 0.01, flags.kl_r);
        return joint_loss(scene.total, resp.total, flags);
    };
    return robust_check(f, std::move(inputs));
}

struct CaseSpec {
    const char* name;
    CaseFn fn;
    double tolerance;
};

}  // namespace

GradCheckReport run_gradcheck_suite(uint64_t seed, int instances) {
    static const CaseSpec specs[] = {
        {"matmul", case_matmul, kTolOp},
        {"softmax", case_softmax, kTolOp},
        {"layer_norm", case_layer_norm, kTolOp},
        {"sigmoid", case_sigmoid, kTolElementwise},
        {"gelu", case_gelu, kTolElementwise},
        {"masked_cross_entropy", case_masked_ce, kTolOp},
        {"masked_bce_with_logits", case_masked_bce, kTolOp},
        {"kl_divergence", case_kl, kTolOp},
        {"kl_to_prior_rows", case_kl_rows, kTolOp},
        {"causal_attention", case_attention, kTolOp},
        {"fuse_block", case_fuse, kTolOp},
        {"joint_loss", case_joint_loss, kTolJoint},
    };

    GradCheckReport report;
    report.all_passed = true;
    for (const CaseSpec& spec : specs) {
        GradCheckCase c;
        c.name = spec.name;
        c.instances = instances;
        c.tolerance = spec.tolerance;
        RngStream rng(derive_seed(seed, fnv1a(spec.name)));
        for (int i = 0; i < instances; ++i) {
            c.max_rel_error = std::max(c.max_rel_error, spec.fn(rng));
        }
        c.passed = c.max_rel_error < c.tolerance;
        report.all_passed = report.all_passed && c.passed;
        report.cases.push_back(std::move(c));
    }
    return report;
}

std::string render_gradcheck_report(const GradCheckReport& report) {
    std::ostringstream os;
    for (const GradCheckCase& c : report.cases) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-24s %s  max rel error %.3e (tolerance %.0e, %d instances)\n",
                      c.name.c_str(), c.passed ? "ok  " : "FAIL", c.max_rel_error, c.tolerance,
                      c.instances);
        os << line;
    }
    os << (report.all_passed ? "gradient check: all cases passed\n"
                             : "gradient check: FAILURES present\n");
    return os.str();
}

}  // namespace mhri
